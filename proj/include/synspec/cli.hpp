#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synspec/architecture.hpp"
#include "synspec/bench.hpp"
#include "synspec/config_io.hpp"
#include "synspec/dataset.hpp"
#include "synspec/model.hpp"
#include "synspec/npy.hpp"
#include "synspec/parallel.hpp"
#include "synspec/training.hpp"

namespace synspec::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFailure = 2, kRuntimeFailure = 3 };

inline constexpr const char* kOutDirEnv = "SYNSPEC_OUT_DIR";

/// Default output directory: $SYNSPEC_OUT_DIR when set, else the current one.
inline std::filesystem::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path(".");
}

namespace detail {

// "lo:hi" ranges such as --peaks 2:10.
template <typename T>
std::pair<T, T> parse_range(const std::string& text, const std::string& flag) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError(flag, "expected lo:hi, got '" + text + "'");
  try {
    std::size_t used = 0;
    const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
    T lo, hi;
    if constexpr (std::is_floating_point_v<T>) {
      lo = static_cast<T>(std::stod(a, &used));
      if (used != a.size()) throw std::invalid_argument(a);
      hi = static_cast<T>(std::stod(b, &used));
      if (used != b.size()) throw std::invalid_argument(b);
    } else {
      lo = static_cast<T>(std::stoull(a, &used));
      if (used != a.size()) throw std::invalid_argument(a);
      hi = static_cast<T>(std::stoull(b, &used));
      if (used != b.size()) throw std::invalid_argument(b);
    }
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw CLI::ValidationError(flag, "expected lo:hi, got '" + text + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

inline ModelScale parse_scale(const std::string& s) { return s == "desk" ? ModelScale::desk : ModelScale::paper; }

/// A registry key (cnn2, cnn6, ...) or a path to an architecture file.
inline ArchitectureSpec resolve_model(const std::string& name, ModelScale scale) {
  if (auto spec = builtin_architecture(name, scale)) return *spec;
  if (std::filesystem::exists(name)) return load_architecture(name);
  std::string known;
  for (const auto& b : kBuiltinArchitectures) known += std::string(known.empty() ? "" : ", ") + b.key;
  throw CLI::ValidationError("--models", "unknown model '" + name + "' (known: " + known + ", or an .arch file)");
}

struct TrainingFlags {
  double learning_rate = 3e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t plateau_patience = 10;
  std::size_t early_stop_patience = 25;

  void add_to(CLI::App& app) {
    app.add_option("--lr", learning_rate, "Initial Adam learning rate");
    app.add_option("--batch-size", batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    app.add_option("--epochs", max_epochs, "Maximum number of epochs");
    app.add_option("--plateau-patience", plateau_patience, "Epochs without improvement before halving the rate");
    app.add_option("--early-stop", early_stop_patience, "Epochs without improvement before stopping");
  }

  TrainingConfig config(std::uint64_t seed) const {
    TrainingConfig c;
    c.learning_rate = learning_rate;
    c.batch_size = batch_size;
    c.max_epochs = max_epochs;
    c.plateau_patience = plateau_patience;
    c.early_stop_patience = early_stop_patience;
    c.seed = seed;
    return c;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ------------------------------------------------------------ gen-config --

struct GenConfigCommand {
  std::string preset = "paper500";
  std::optional<std::size_t> classes, datapoints, samples_per_class;
  std::optional<std::string> peaks, widths, intensity_mode;
  std::optional<double> margin, min_separation, max_shift, intensity_delta, grid_shift, grid_delta, test_width,
      val_fraction;
  std::uint64_t seed = 0;
  std::string out;

  void add_to(CLI::App& app) {
    app.add_option("--preset", preset, "Base settings: desk or paper500")
        ->check(CLI::IsMember({"desk", "paper500"}));
    app.add_option("--classes", classes, "Number of classes (default: preset)");
    app.add_option("--datapoints", datapoints, "Spectrum length (default: preset)");
    app.add_option("--peaks", peaks, "Peak count range lo:hi (default: preset)");
    app.add_option("--margin", margin, "Border margin in datapoints (default: preset)");
    app.add_option("--min-separation", min_separation, "Minimum gap between peaks of a class (default: preset)");
    app.add_option("--max-shift", max_shift, "Training per-peak shift bound (default: preset)");
    app.add_option("--intensity-delta", intensity_delta, "Training per-peak intensity change bound (default: preset)");
    app.add_option("--intensity-mode", intensity_mode, "multiplicative or additive (default: multiplicative)")
        ->check(CLI::IsMember({"multiplicative", "additive"}));
    app.add_option("--widths", widths, "Training peak width range lo:hi (default: preset)");
    app.add_option("--grid-shift", grid_shift, "Test grid global shift (default: preset)");
    app.add_option("--grid-delta", grid_delta, "Test grid global intensity change (default: preset)");
    app.add_option("--test-width", test_width, "Peak width of test spectra (default: preset)");
    app.add_option("--samples-per-class", samples_per_class, "Training + validation spectra per class (default: 60)");
    app.add_option("--val-fraction", val_fraction, "Share of those spectra used for validation (default: 1/6)");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--out", out, "Output file (default: $SYNSPEC_OUT_DIR/dataset_config.json)");
  }

  GenerationConfig generation() const {
    GenerationConfig g = *generation_preset(preset);
    if (classes) g.n_classes = *classes;
    if (datapoints) g.n_datapoints = *datapoints;
    if (peaks) std::tie(g.min_peaks, g.max_peaks) = parse_range<std::size_t>(*peaks, "--peaks");
    if (margin) g.border_margin = *margin;
    if (min_separation) g.min_peak_separation = *min_separation;
    if (max_shift) g.training_variation.max_shift = *max_shift;
    if (intensity_delta) g.training_variation.max_intensity_delta = *intensity_delta;
    if (intensity_mode)
      g.training_variation.intensity_mode =
          *intensity_mode == "additive" ? IntensityMode::additive : IntensityMode::multiplicative;
    if (widths)
      std::tie(g.training_variation.width_min, g.training_variation.width_max) =
          parse_range<double>(*widths, "--widths");
    if (grid_shift) g.test_grid.grid_shift = *grid_shift;
    if (grid_delta) g.test_grid.grid_intensity_delta = *grid_delta;
    if (test_width) g.test_grid.test_width = *test_width;
    if (samples_per_class) g.train_samples_per_class = *samples_per_class;
    if (val_fraction) g.val_fraction = *val_fraction;
    g.master_seed = seed;
    return g;
  }

  int run(Context& ctx) const {
    const auto g = generation();
    GenerationReport report;
    const auto config = generate_dataset_config(g, &report);
    const auto path = out.empty() ? default_out_dir() / "dataset_config.json" : std::filesystem::path(out);
    write_text(path, dump_config(config));
    ctx.out << "wrote " << path.string() << ": " << g.n_classes << " classes, " << g.n_datapoints
            << " datapoints, separable (" << report.resampled_classes << " classes resampled, "
            << report.total_retries << " retries)\n";
    return kOk;
  }
};

// -------------------------------------------------------------- gen-data --

struct GenDataCommand {
  std::string config;
  std::string out;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Dataset config file")->required();
    app.add_option("--out", out, "Output directory (default: $SYNSPEC_OUT_DIR or .)");
  }

  int run(Context& ctx) const {
    std::vector<std::string> warnings;
    const auto cfg = load_config(config, &warnings);
    for (const auto& w : warnings) ctx.err << "warning: " << config << ": " << w << "\n";
    const auto splits = build_dataset(cfg);
    const auto dir = out.empty() ? default_out_dir() : std::filesystem::path(out);
    save_splits(splits, dir);
    ctx.out << "wrote " << dir.string() << ": " << splits.train.rows() << " train, " << splits.validation.rows()
            << " validation, " << splits.test.rows() << " test spectra of " << cfg.generation.n_datapoints
            << " datapoints\n";
    return kOk;
  }
};

// -------------------------------------------------------------- validate --

struct ValidateCommand {
  std::string config;
  std::string data;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Dataset config file")->required();
    app.add_option("--data", data, "Also classify the stored test arrays in this directory (default: off)");
  }

  int run(Context& ctx) const {
    std::vector<std::string> warnings;
    const auto cfg = load_config(config, &warnings);
    for (const auto& w : warnings) ctx.err << "warning: " << config << ": " << w << "\n";
    const auto violations = validate_separability(cfg);
    for (const auto& v : violations) {
      ctx.out << "class " << v.class_id << " variant " << v.variant_index << ": nearest class " << v.nearest_class_id
              << " (" << format_double(v.nearest_similarity) << " vs own " << format_double(v.own_similarity) << ")"
              << (v.tie ? " tie" : "") << "\n";
    }
    int code = violations.empty() ? kOk : kDataFailure;
    ctx.out << (violations.empty() ? "separable" : "NOT separable") << ": " << violations.size() << " violations over "
            << cfg.generation.n_classes * kTestGridSize << " test variants\n";
    if (!data.empty()) {
      const auto test = load_arrays((std::filesystem::path(data) / "x_test.npy").string(),
                                    (std::filesystem::path(data) / "y_test.npy").string(), SplitRole::test);
      const auto sweep = oracle_sweep(test, cfg);
      ctx.out << "oracle on stored test arrays: " << sweep.matches << "/" << sweep.samples << " correct\n";
      if (sweep.matches != sweep.samples) code = kDataFailure;
    }
    return code;
  }
};

// ----------------------------------------------------------------- train --

struct TrainCommand {
  std::string data;
  std::string model = "cnn2";
  std::string scale = "paper";
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
  TrainingFlags training;

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "Directory with the x_/y_ array files")->required();
    app.add_option("--model", model, "Registry key or architecture file");
    app.add_option("--scale", scale, "Registry variant: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--seed", seed, "Initialization and shuffling seed");
    app.add_option("--out", out, "Output directory (default: $SYNSPEC_OUT_DIR or .)");
    app.add_flag("--quiet", quiet, "Do not print per-epoch progress");
    training.add_to(app);
  }

  int run(Context& ctx) const {
    const auto splits = load_splits(data);
    const auto spec = resolve_model(model, parse_scale(scale));
    auto built = build_model(spec, splits.train.n_datapoints, class_count(splits), seed);
    TrainingHooks hooks;
    if (!quiet)
      hooks.on_epoch = [&](const EpochRecord& r) {
        ctx.out << "epoch " << r.epoch << " train_loss " << format_double(r.train_loss) << " val_loss "
                << format_double(r.val_loss) << " val_acc " << format_double(r.val_accuracy) << " lr "
                << format_double(r.learning_rate) << "\n";
      };
    nn::AdamState<float> adam;
    const auto history = train(built.model, splits.train, splits.validation, training.config(seed), hooks, &adam);
    const auto eval = evaluate(built.model, splits.test);

    const auto dir = out.empty() ? default_out_dir() : std::filesystem::path(out);
    std::filesystem::create_directories(dir);
    write_text(dir / "history.csv", history_csv(history));
    nn::Checkpoint<float> ck{spec.grammar, built.model.specs(), 1, splits.train.n_datapoints,
                             built.model.state(), std::move(adam)};
    nn::save_checkpoint((dir / "checkpoint.bin").string(), ck);
    ctx.out << spec.name << ": " << eval.misclassifications << " of " << splits.test.rows()
            << " test spectra misclassified (accuracy " << format_double(eval.accuracy) << "), "
            << history.trained_epochs() << " epochs, best " << history.best_epoch << ", "
            << to_string(history.stop_reason) << "\n";
    return kOk;
  }
};

// ----------------------------------------------------------------- bench --

struct BenchCommand {
  std::string data;
  std::string models = "cnn2,cnn3,cnn6,cnn_bn,vgg";
  std::string scale = "paper";
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
  std::string out;
  bool no_timestamp = false;
  bool quiet = false;
  TrainingFlags training;

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "Directory with the x_/y_ array files")->required();
    app.add_option("--models", models, "Comma-separated registry keys or architecture files");
    app.add_option("--scale", scale, "Registry variant: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--seeds", seeds, "Runs per model")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Base seed; run i uses a child seed of it");
    app.add_option("--out", out, "Output directory (default: $SYNSPEC_OUT_DIR or .)");
    app.add_flag("--no-timestamp", no_timestamp, "Omit the timestamp and timings so reports are reproducible");
    app.add_flag("--quiet", quiet, "Do not print per-run progress");
    training.add_to(app);
  }

  int run(Context& ctx) const {
    const auto splits = load_splits(data);
    std::vector<ArchitectureSpec> specs;
    for (const auto& m : split_list(models)) specs.push_back(resolve_model(m, parse_scale(scale)));
    BenchOptions opt;
    opt.n_seeds = seeds;
    opt.base_seed = seed;
    opt.training = training.config(seed);
    if (!quiet)
      opt.on_run = [&](const RunRow& r) {
        ctx.out << r.model << " seed " << r.seed_index << ": ";
        if (r.status == RunStatus::ok)
          ctx.out << r.misclassifications << " misclassified, " << r.trained_epochs << " epochs\n";
        else
          ctx.out << "error: " << r.error << "\n";
      };
    auto report = run_benchmark(specs, splits, opt);
    if (no_timestamp) report.redact_timing();
    const auto dir = out.empty() ? default_out_dir() : std::filesystem::path(out);
    std::filesystem::create_directories(dir);
    write_text(dir / "report.md", format_report(report, ReportStyle::markdown));
    write_text(dir / "report.csv", format_report(report, ReportStyle::csv));
    write_text(dir / "runs.csv", format_runs_csv(report));
    write_text(dir / "manifest.json", benchmark_manifest(specs, data, opt, report).dump(2) + "\n");
    ctx.out << format_report(report, ReportStyle::markdown);
    return report.complete() ? kOk : kRuntimeFailure;
  }
};

// ----------------------------------------------------------- export-plot --

struct ExportPlotCommand {
  std::string config;
  std::size_t class_id = 0;
  std::string kind = "ideal";
  std::size_t index = 0;
  std::string out;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Dataset config file")->required();
    app.add_option("--class", class_id, "Class id");
    app.add_option("--kind", kind, "ideal, train (a training variant) or test (a test-grid entry)")
        ->check(CLI::IsMember({"ideal", "train", "test"}));
    app.add_option("--index", index, "Variant index for train (sample) or test (0-8)");
    app.add_option("--out", out, "Output directory (default: $SYNSPEC_OUT_DIR or .)");
  }

  int run(Context& ctx) const {
    const auto cfg = load_config(config);
    const auto& g = cfg.generation;
    if (class_id >= g.n_classes)
      throw CLI::ValidationError("--class", std::to_string(class_id) + " is not below " + std::to_string(g.n_classes));
    const auto& fp = cfg.fingerprints[class_id];
    Variant v{fp, g.test_grid.test_width};
    if (kind == "train") {
      if (index >= g.train_samples_per_class)
        throw CLI::ValidationError("--index", "training samples per class is " +
                                                   std::to_string(g.train_samples_per_class));
      RandomStream rng = streams::samples(g.master_seed, class_id).split(index);
      v = sample_training_variant(fp, g.training_variation, rng, g.n_datapoints);
    } else if (kind == "test") {
      if (index >= kTestGridSize) throw CLI::ValidationError("--index", "test grid index must be below 9");
      v = build_test_grid(fp, g.test_grid)[index];
    }
    const auto s = render_spectrum(v.fingerprint, v.width, g.n_datapoints);
    const std::string stem = "class" + std::to_string(class_id) + "_" + kind +
                             (kind == "ideal" ? "" : std::to_string(index));
    const auto dir = out.empty() ? default_out_dir() : std::filesystem::path(out);
    std::string spectrum = "index,intensity\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) spectrum += std::to_string(i) + "," + format_double(s.values[i]) + "\n";
    // Markers sit on the rendered curve at the nearest datapoint.
    std::string peaks = "position,intensity\n";
    for (const auto& p : v.fingerprint.peaks) {
      const auto i = static_cast<std::size_t>(std::clamp<long long>(std::llround(p.position), 0,
                                                                    static_cast<long long>(s.values.size()) - 1));
      peaks += format_double(p.position) + "," + format_double(s.values[i]) + "\n";
    }
    write_text(dir / (stem + "_spectrum.csv"), spectrum);
    write_text(dir / (stem + "_peaks.csv"), peaks);
    ctx.out << "wrote " << (dir / (stem + "_spectrum.csv")).string() << " and " << (dir / (stem + "_peaks.csv")).string()
            << "\n";
    return kOk;
  }
};

}  // namespace detail

/// Runs one command line. `args` excludes the program name.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Synthetic spectra generator and classifier benchmark", "synspec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  detail::GenConfigCommand gen_config;
  detail::GenDataCommand gen_data;
  detail::ValidateCommand validate;
  detail::TrainCommand train_cmd;
  detail::BenchCommand bench;
  detail::ExportPlotCommand export_plot;
  gen_config.add_to(*app.add_subcommand("gen-config", "Sample class fingerprints and write a dataset config"));
  gen_data.add_to(*app.add_subcommand("gen-data", "Render the train/validation/test arrays of a config"));
  validate.add_to(*app.add_subcommand("validate", "Check that every test variant is nearest to its own class"));
  train_cmd.add_to(*app.add_subcommand("train", "Train one model and report its test misclassifications"));
  bench.add_to(*app.add_subcommand("bench", "Train several models over several seeds and write reports"));
  export_plot.add_to(*app.add_subcommand("export-plot", "Write one spectrum and its peak markers as CSV"));

  detail::Context ctx{out, err};
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  set_num_threads(threads);
  try {
    if (app.got_subcommand("gen-config")) return gen_config.run(ctx);
    if (app.got_subcommand("gen-data")) return gen_data.run(ctx);
    if (app.got_subcommand("validate")) return validate.run(ctx);
    if (app.got_subcommand("train")) return train_cmd.run(ctx);
    if (app.got_subcommand("bench")) return bench.run(ctx);
    if (app.got_subcommand("export-plot")) return export_plot.run(ctx);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  } catch (const Error& e) {
    // Remaining library errors concern the inputs: configs, arrays, shapes.
    err << "error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsage;
}

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace synspec::cli
