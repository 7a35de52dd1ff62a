// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

#include "synspec/cli.hpp"
#include "synspec/synspec.hpp"
#include "step_sweep.hpp"

using namespace synspec;
namespace fs = std::filesystem;

namespace {

// Pinned limits.
constexpr std::size_t kRenderCount = 100'000;
constexpr double kRenderBudgetS = 60.0;
constexpr double kGenerateBudgetS = 120.0;
constexpr double kGradientH = 1e-3;
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientBudgetS = 120.0;
constexpr std::size_t kDeskMaxEpochs = 150;
constexpr double kDeskMinAccuracy = 0.97;
constexpr double kDeskBudgetS = 1200.0;
constexpr int kBenchSeeds = 5;
constexpr int kBenchEpochs = 2;
constexpr double kAggregateTolerance = 1e-9;
constexpr int kReproEpochs = 2;

const std::string kSource = SYNSPEC_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::current_path() / "acceptance_work" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (code != 0) std::cerr << "  cli " << args.front() << " exited " << code << ": " << err.str();
  return code;
}

const DatasetConfig& desk_config() {
  static const DatasetConfig cfg = load_config(kSource + "/configs/dataset_desk.json");
  return cfg;
}

Outcome render_throughput() {
  const auto cfg = load_config(kSource + "/configs/dataset500.json");
  const std::size_t n = cfg.generation.n_datapoints;
  const auto& var = cfg.generation.training_variation;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> checksums(kRenderCount);
  parallel_for(kRenderCount, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch(n);
    std::vector<float> row(n);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& fp = cfg.fingerprints[i % cfg.fingerprints.size()];
      RandomStream rng = streams::samples(cfg.generation.master_seed, fp.class_id).split(i);
      const Variant v = sample_training_variant(fp, var, rng, n);
      render_into(scratch, v.fingerprint.peaks, v.width, true);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += row[k] = static_cast<float>(scratch[k]);
      checksums[i] = s;
    }
  });
  const double t = seconds_since(t0);
  bool finite = true;
  for (double s : checksums) finite = finite && std::isfinite(s) && s > 0.0;
  return {t <= kRenderBudgetS && finite,
          std::to_string(kRenderCount) + " x " + std::to_string(n) + " spectra in " + fixed(t) + " s (limit " +
              fixed(kRenderBudgetS, 0) + " s)"};
}

DatasetConfig paper_config;
DatasetSplits paper_splits;

Outcome paper_generation() {
  auto g = *generation_preset("paper500");
  g.master_seed = 7;
  const auto t0 = std::chrono::steady_clock::now();
  paper_config = generate_dataset_config(g);
  paper_splits = build_dataset(paper_config);
  const double t = seconds_since(t0);
  const std::size_t train_val = paper_splits.train.rows() + paper_splits.validation.rows();
  const std::size_t test = paper_splits.test.rows();
  return {t < kGenerateBudgetS && train_val == 30'000 && test == 4'500,
          std::to_string(train_val) + " train+validation, " + std::to_string(test) + " test rows in " + fixed(t) +
              " s (limit " + fixed(kGenerateBudgetS, 0) + " s)"};
}

Outcome oracle_agreement() {
  if (paper_splits.test.rows() == 0) return {false, "no dataset (generation failed)"};
  const auto sweep = oracle_sweep(paper_splits.test, paper_config);
  return {sweep.matches == sweep.samples && sweep.samples == 4'500 && sweep.ties == 0,
          std::to_string(sweep.matches) + "/" + std::to_string(sweep.samples) + " matches, " +
              std::to_string(sweep.ties) + " ties"};
}

nn::Tensor<double> random_batch(std::size_t batch, std::size_t channels, std::size_t length, RandomStream& r) {
  nn::Tensor<double> x({batch, channels, length});
  for (auto& v : x.data) v = r.uniform(-1.0, 1.0);
  return x;
}

Outcome gradient_checks() {
  using nn::LayerSpec;
  struct Case {
    std::string name;
    std::vector<LayerSpec> layers;
    std::size_t length;
  };
  // One stack per layer kind, each ending in the dense+softmax head, plus
  // random small architectures.
  std::vector<Case> cases{
      {"conv1d", {LayerSpec::conv(3, 3), LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()}, 10},
      {"conv1d stride 2",
       {LayerSpec::conv(2, 3, 2), LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()},
       11},
      {"maxpool1d",
       {LayerSpec::conv(2, 3), LayerSpec::pool(2), LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()},
       12},
      {"batchnorm",
       {LayerSpec::conv(3, 3), LayerSpec::batchnorm(), LayerSpec::flatten(), LayerSpec::dense(3),
        LayerSpec::softmax()},
       10},
      {"relu",
       {LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()},
       10},
      {"dense",
       {LayerSpec::flatten(), LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(3), LayerSpec::softmax()},
       8},
      {"flatten+softmax", {LayerSpec::flatten(), LayerSpec::dense(4), LayerSpec::softmax()}, 6},
  };
  RandomStream arch_rng(2024);
  for (int i = 0; i < 3; ++i) {
    std::vector<LayerSpec> layers;
    const std::size_t blocks = arch_rng.integer(1, 2);
    for (std::size_t b = 0; b < blocks; ++b) {
      layers.push_back(LayerSpec::conv(arch_rng.integer(1, 4), arch_rng.integer(2, 4)));
      if (arch_rng.below(2)) layers.push_back(LayerSpec::batchnorm());
      layers.push_back(LayerSpec::relu());
      layers.push_back(LayerSpec::pool(arch_rng.integer(1, 2)));
    }
    layers.push_back(LayerSpec::flatten());
    layers.push_back(LayerSpec::dense(arch_rng.integer(2, 6)));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::dense(arch_rng.integer(2, 4)));
    layers.push_back(LayerSpec::softmax());
    cases.push_back({"random " + std::to_string(i + 1), layers, arch_rng.integer(16, 24)});
  }

  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_case;
  RandomStream data_rng(77);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    // Every parameter is drawn at random. Zero-initialized biases would put
    // ReLU inputs exactly at the kink wherever a receptive field is dead.
    nn::Model<double> m(cases[c].layers, 1, cases[c].length);
    RandomStream param_rng(100 + c);
    for (auto& p : m.parameters())
      for (auto& v : p.value->data) v = param_rng.uniform(-1.0, 1.0);
    const std::size_t batch = 4;
    const auto x = random_batch(batch, 1, cases[c].length, data_rng);
    std::vector<int> y(batch);
    for (auto& v : y) v = static_cast<int>(data_rng.below(m.n_outputs()));
    const auto r = nn::gradient_check(m, x, std::span<const int>(y), kGradientH);
    std::cout << "  gradient check " << cases[c].name << ": " << r.max_relative_error << " over " << r.checked
              << " parameters";
    if (r.max_relative_error >= kGradientTolerance)
      // Diagnostic only: distinguishes a kink straddled by the step from a wrong backward pass.
      std::cout << " (best over steps 1e-3, 1e-4, 1e-5: "
                << testing::step_sweep_error(m, x, std::span<const int>(y), {1e-3, 1e-4, 1e-5}) << ")";
    std::cout << "\n";
    if (!(r.max_relative_error <= worst) || !std::isfinite(r.max_relative_error)) {
      worst = r.max_relative_error;
      worst_case = cases[c].name + " (" + r.worst_parameter + ")";
    }
  }
  const double t = seconds_since(t0);
  std::ostringstream d;
  d << cases.size() << " models, max relative error " << worst << " in " << worst_case << " (limit "
    << kGradientTolerance << "), " << fixed(t) << " s";
  return {worst < kGradientTolerance && t < kGradientBudgetS, d.str()};
}

Outcome desk_training() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto splits = build_dataset(desk_config());
  auto built = build_model(*builtin_architecture("cnn2", ModelScale::desk), desk_config().generation.n_datapoints,
                           desk_config().generation.n_classes, 0);
  TrainingConfig tc;
  tc.max_epochs = kDeskMaxEpochs;
  TrainingHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    if (e.epoch % 10 == 0)
      std::cout << "  desk cnn2 epoch " << e.epoch << ": val_loss " << e.val_loss << " val_acc " << e.val_accuracy
                << std::endl;
  };
  const auto h = train(built.model, splits.train, splits.validation, tc, hooks);
  const auto r = evaluate(built.model, splits.test);
  const double t = seconds_since(t0);
  return {r.accuracy >= kDeskMinAccuracy && t < kDeskBudgetS,
          "test accuracy " + fixed(100.0 * r.accuracy, 2) + "% (" + std::to_string(r.misclassifications) +
              " errors), " + std::to_string(h.trained_epochs()) + " epochs, " + fixed(t) + " s (limit " +
              fixed(kDeskBudgetS, 0) + " s)"};
}

fs::path desk_data_dir() {
  static const fs::path dir = [] {
    const auto d = scratch_dir("desk_data");
    if (cli_run({"gen-data", "--config", kSource + "/configs/dataset_desk.json", "--out", d.string()}) != 0)
      throw Error("gen-data failed for the desk config");
    return d;
  }();
  return dir;
}

Outcome bench_aggregates() {
  const auto out = scratch_dir("bench");
  if (cli_run({"bench", "--data", desk_data_dir().string(), "--models", "cnn2,cnn6", "--scale", "desk", "--seeds",
               std::to_string(kBenchSeeds), "--epochs", std::to_string(kBenchEpochs), "--no-timestamp", "--quiet",
               "--out", out.string()}) != 0)
    return {false, "bench exited nonzero"};
  const auto rows = parse_runs_csv(slurp(out / "runs.csv"));
  const auto reported = parse_aggregate_csv(slurp(out / "report.csv"));
  const auto md = slurp(out / "report.md");

  std::map<std::string, std::vector<double>> by_model;
  for (const auto& r : rows)
    if (r.status == RunStatus::ok) by_model[r.model].push_back(static_cast<double>(r.misclassifications));
  bool ok = rows.size() == 2u * kBenchSeeds && by_model.size() == 2 && reported.size() == 2;
  std::ostringstream d;
  d << rows.size() << " runs";
  for (const auto& agg : reported) {
    const auto& v = by_model[agg.model];
    if (v.size() != static_cast<std::size_t>(kBenchSeeds)) {
      ok = false;
      continue;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    const bool match = std::abs(agg.mean_misclassifications - mean) <= kAggregateTolerance &&
                       std::abs(agg.std_misclassifications - sd) <= kAggregateTolerance;
    const std::string cell = std::to_string(std::llround(mean)) + " +/- " + std::to_string(std::llround(sd));
    const bool shown = md.find("| " + agg.model + " | " + cell + " |") != std::string::npos;
    ok = ok && match && shown;
    d << "; " << agg.model << " " << cell << (match ? "" : " (aggregate mismatch)") << (shown ? "" : " (not in md)");
  }
  return {ok, d.str()};
}

Outcome reproducibility() {
  const auto a = scratch_dir("threads1"), b = scratch_dir("threads8");
  const std::string cfg = kSource + "/configs/dataset_desk.json";
  if (cli_run({"--threads", "1", "gen-data", "--config", cfg, "--out", a.string()}) != 0 ||
      cli_run({"--threads", "8", "gen-data", "--config", cfg, "--out", b.string()}) != 0)
    return {false, "gen-data exited nonzero"};
  set_num_threads(0);
  std::size_t same = 0;
  const auto files = split_file_names();
  for (const auto& f : files) same += sha256_file(a / f) == sha256_file(b / f);

  const auto r1 = scratch_dir("train1"), r2 = scratch_dir("train2");
  for (const auto& r : {r1, r2})
    if (cli_run({"train", "--data", a.string(), "--model", "cnn2", "--scale", "desk", "--epochs",
                 std::to_string(kReproEpochs), "--seed", "3", "--quiet", "--out", r.string()}) != 0)
      return {false, "train exited nonzero"};
  const auto h1 = slurp(r1 / "history.csv"), h2 = slurp(r2 / "history.csv");
  const bool history_same = !h1.empty() && h1 == h2;
  return {same == files.size() && history_same,
          std::to_string(same) + "/" + std::to_string(files.size()) + " files identical at 1 and 8 threads; " +
              "training histories " + (history_same ? "identical" : "differ")};
}

Outcome interchange() {
  const auto dir = desk_data_dir();
  std::ostringstream d;
  bool ok = true;

  // Byte-level header grammar for every written file.
  const std::regex dict(R"(\{'descr': '(<f4|<i8)', 'fortran_order': False, 'shape': \((\d+,|\d+, \d+)\), \} *\n)");
  for (const auto& f : split_file_names()) {
    const auto bytes = slurp(dir / f);
    const bool magic = bytes.size() >= 10 && bytes.compare(0, 6, "\x93NUMPY") == 0 && bytes[6] == 1 && bytes[7] == 0;
    const std::size_t hlen = magic ? static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8
                                   : 0;
    const bool aligned = magic && (10 + hlen) % 64 == 0;
    const bool grammar = aligned && std::regex_match(bytes.substr(10, hlen), dict);
    if (!grammar) {
      ok = false;
      d << f << " header invalid; ";
    }
  }

  // Bit-exact reload.
  const auto original = build_dataset(desk_config());
  const auto loaded = load_splits(dir);
  const bool exact = loaded.train.spectra == original.train.spectra && loaded.train.labels == original.train.labels &&
                     loaded.validation.spectra == original.validation.spectra &&
                     loaded.test.spectra == original.test.spectra && loaded.test.labels == original.test.labels;
  ok = ok && exact;
  d << "reload " << (exact ? "bit-exact" : "differs");

  // Independent reader, when numpy is available.
  if (std::system("python3 -c 'import numpy' > /dev/null 2>&1") == 0) {
    const std::string script =
        "import numpy as np, sys\n"
        "d = sys.argv[1]\n"
        "x = np.load(d + '/x_test.npy'); y = np.load(d + '/y_test.npy')\n"
        "assert x.dtype == np.float32 and y.dtype == np.int64, (x.dtype, y.dtype)\n"
        "assert x.shape == (" +
        std::to_string(original.test.rows()) + ", " + std::to_string(original.test.n_datapoints) +
        "), x.shape\n"
        "assert y.shape == (" +
        std::to_string(original.test.rows()) +
        ",), y.shape\n"
        "print(repr(float(x.astype(np.float64).sum())), int(y.sum()))\n";
    const auto script_path = dir / "check.py";
    std::ofstream(script_path) << script;
    const auto out_path = dir / "numpy.out";
    const int rc = std::system(("python3 " + script_path.string() + " " + dir.string() + " > " +
                                out_path.string() + " 2>&1")
                                   .c_str());
    double sum = 0.0;
    std::int64_t labels = 0;
    for (float v : original.test.spectra) sum += static_cast<double>(v);
    for (auto v : original.test.labels) labels += v;
    std::istringstream in(slurp(out_path));
    double np_sum = 0.0;
    std::int64_t np_labels = -1;
    in >> np_sum >> np_labels;
    // numpy's pairwise summation may round differently from a plain loop.
    const bool agree = rc == 0 && std::abs(np_sum - sum) <= 1e-9 * std::abs(sum) && np_labels == labels;
    ok = ok && agree;
    d << ", numpy reader " << (agree ? "agrees" : "disagrees: " + slurp(out_path));
  } else {
    d << ", numpy unavailable";
  }

  // Config text round trip.
  const std::string text = dump_config(desk_config());
  const bool config_same = dump_config(parse_config(text)) == text && parse_config(text) == desk_config();
  ok = ok && config_same;
  d << ", config round trip " << (config_same ? "identical" : "differs");
  return {ok, d.str()};
}

Outcome scheduler_timeline() {
  TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  PlateauScheduler s(cfg);
  std::vector<std::size_t> reductions;
  std::vector<double> rates;
  std::size_t stop = 0;
  for (std::size_t epoch = 1; epoch <= 100 && !stop; ++epoch) {
    const auto d = s.observe(0.75);
    if (d.reduced) {
      reductions.push_back(epoch);
      rates.push_back(s.learning_rate());
    }
    if (d.stop) stop = epoch;
  }
  const bool ok = reductions == std::vector<std::size_t>{11, 21} && stop == 26 &&
                  rates == std::vector<double>{0.5e-3, 0.25e-3};
  std::ostringstream d;
  d << "reductions after epochs";
  for (auto e : reductions) d << " " << e;
  d << ", stop after epoch " << stop;
  return {ok, d.str()};
}

}  // namespace

// Optional arguments select criteria by number, e.g. `acceptance 4 9`.
int main(int argc, char** argv) {
  const std::array<std::pair<const char*, std::function<Outcome()>>, 9> criteria{{
      {"render throughput", render_throughput},
      {"paper-scale generation", paper_generation},
      {"oracle agreement", oracle_agreement},
      {"gradient checks", gradient_checks},
      {"desk training accuracy", desk_training},
      {"bench aggregates", bench_aggregates},
      {"reproducibility", reproducibility},
      {"array and config interchange", interchange},
      {"plateau schedule", scheduler_timeline},
  }};
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << argv[a] << "\n";
      return 2;
    }
    selected[k - 1] = true;
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
