#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "synspec/architecture.hpp"
#include "synspec/dataset.hpp"
#include "synspec/npy.hpp"
#include "synspec/oracle.hpp"
#include "synspec/parallel.hpp"
#include "synspec/training.hpp"

namespace synspec {

// ----------------------------------------------------------------- oracle --

/// Ideal renders of every class at the test width, slid by up to the test
/// grid's global shift.
inline ReferenceLibrary reference_library(const DatasetConfig& config) {
  const auto& g = config.generation;
  return ReferenceLibrary(config.fingerprints, g.test_grid.test_width, g.n_datapoints,
                          static_cast<std::int64_t>(std::llround(g.test_grid.grid_shift)));
}

template <typename T>
OracleResult oracle_classify(std::span<const T> spectrum, const DatasetConfig& config) {
  return reference_library(config).classify(spectrum);
}

struct OracleSweep {
  std::size_t samples = 0;
  std::size_t matches = 0;
  std::size_t ties = 0;
  std::vector<std::size_t> mismatched_rows;
};

/// Classifies every row of `data` with the oracle.
inline OracleSweep oracle_sweep(const LabeledDataset& data, const DatasetConfig& config) {
  const ReferenceLibrary lib = reference_library(config);
  OracleSweep s;
  s.samples = data.rows();
  std::vector<OracleResult> results(data.rows());
  parallel_for(data.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) results[i] = lib.classify(data.row(i));
  });
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].tie) ++s.ties;
    if (results[i].class_id == data.labels[i] && !results[i].tie)
      ++s.matches;
    else
      s.mismatched_rows.push_back(i);
  }
  return s;
}

// ----------------------------------------------------------------- report --

enum class RunStatus { ok, error };

struct RunRow {
  std::string model;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::ok;
  std::size_t misclassifications = 0;
  std::size_t trained_epochs = 0;
  std::size_t best_epoch = 0;
  std::string stop_reason;
  double wall_time_s = 0.0;
  double cpu_time_s = 0.0;
  std::string error;
  friend bool operator==(const RunRow&, const RunRow&) = default;
};

struct ModelAggregate {
  std::string model;
  std::size_t runs = 0;    // successful runs
  std::size_t failed = 0;
  double mean_misclassifications = 0.0;
  double std_misclassifications = 0.0;  // n-1 denominator; 0 when undefined
  bool std_defined = false;
  std::size_t min_epochs = 0;
  std::size_t max_epochs = 0;
  double mean_minutes = 0.0;
  friend bool operator==(const ModelAggregate&, const ModelAggregate&) = default;
};

struct RunReport {
  std::string hardware;
  std::string timestamp;  // empty when suppressed
  std::uint64_t base_seed = 0;
  std::size_t n_seeds = 0;
  std::vector<RunRow> rows;  // canonical (model, seed) order
  std::vector<ModelAggregate> aggregates;

  bool complete() const {
    return std::all_of(rows.begin(), rows.end(), [](const RunRow& r) { return r.status == RunStatus::ok; });
  }

  /// Zeroes timing and drops the timestamp so that repeated runs format to
  /// identical bytes.
  void redact_timing() {
    timestamp.clear();
    for (auto& r : rows) r.wall_time_s = r.cpu_time_s = 0.0;
    for (auto& a : aggregates) a.mean_minutes = 0.0;
  }
};

/// Per-model aggregates in first-appearance order of the models in `rows`.
inline std::vector<ModelAggregate> aggregate_rows(const std::vector<RunRow>& rows) {
  std::vector<ModelAggregate> out;
  std::map<std::string, std::vector<const RunRow*>> by_model;
  for (const auto& r : rows) {
    if (!by_model.contains(r.model)) out.push_back(ModelAggregate{r.model});
    by_model[r.model].push_back(&r);
  }
  for (auto& a : out) {
    std::vector<const RunRow*> ok;
    for (const RunRow* r : by_model[a.model]) {
      if (r->status == RunStatus::ok)
        ok.push_back(r);
      else
        ++a.failed;
    }
    a.runs = ok.size();
    if (ok.empty()) continue;
    const double n = static_cast<double>(ok.size());
    double sum = 0.0, minutes = 0.0;
    a.min_epochs = ok.front()->trained_epochs;
    a.max_epochs = ok.front()->trained_epochs;
    for (const RunRow* r : ok) {
      sum += static_cast<double>(r->misclassifications);
      minutes += r->wall_time_s / 60.0;
      a.min_epochs = std::min(a.min_epochs, r->trained_epochs);
      a.max_epochs = std::max(a.max_epochs, r->trained_epochs);
    }
    a.mean_misclassifications = sum / n;
    a.mean_minutes = minutes / n;
    if (ok.size() > 1) {
      double ss = 0.0;
      for (const RunRow* r : ok) {
        const double d = static_cast<double>(r->misclassifications) - a.mean_misclassifications;
        ss += d * d;
      }
      a.std_misclassifications = std::sqrt(ss / (n - 1.0));
      a.std_defined = true;
    }
  }
  return out;
}

/// "14 +/- 2": mean and standard deviation rounded to integers.
inline std::string format_mean_std(double mean, double std_dev) {
  return std::to_string(std::llround(mean)) + " +/- " + std::to_string(std::llround(std_dev));
}

inline std::string hardware_description() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return cpu + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " logical cores, " +
         std::to_string(num_threads()) + " threads used";
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

enum class ReportStyle { csv, markdown };

namespace detail {

inline std::string one_decimal(double m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << m;
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad number '" + s + "' in column " + what);
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad integer '" + s + "' in column " + what);
  return v;
}

}  // namespace detail

inline constexpr const char* kAggregateCsvHeader =
    "model,runs,failed,mean_misclassifications,std_misclassifications,std_defined,min_epochs,max_epochs,"
    "mean_minutes";
inline constexpr const char* kRunsCsvHeader =
    "model,seed_index,seed,status,misclassifications,trained_epochs,best_epoch,stop_reason,wall_time_s,cpu_time_s,"
    "error";

/// CSV: one aggregate row per model, numbers in shortest round-trip form.
/// Markdown: the summary table followed by the per-run table.
inline std::string format_report(const RunReport& report, ReportStyle style) {
  std::string out;
  if (style == ReportStyle::csv) {
    out = std::string(kAggregateCsvHeader) + "\n";
    for (const auto& a : report.aggregates) {
      out += a.model + "," + std::to_string(a.runs) + "," + std::to_string(a.failed) + "," +
             format_double(a.mean_misclassifications) + "," + format_double(a.std_misclassifications) + "," +
             (a.std_defined ? "1" : "0") + "," + std::to_string(a.min_epochs) + "," + std::to_string(a.max_epochs) +
             "," + format_double(a.mean_minutes) + "\n";
    }
    return out;
  }
  out += "# Benchmark report\n\n";
  out += "- hardware: " + report.hardware + "\n";
  if (!report.timestamp.empty()) out += "- generated: " + report.timestamp + "\n";
  out += "- base seed: " + std::to_string(report.base_seed) + ", seeds per model: " + std::to_string(report.n_seeds) +
         "\n";
  if (!report.complete()) out += "- INCOMPLETE: some runs failed, see the run table\n";
  out += "\n| Model | Misclassifications | Trained Epochs | Time (min) |\n";
  out += "|---|---|---|---|\n";
  bool footnote = false;
  for (const auto& a : report.aggregates) {
    std::string mis = a.runs == 0 ? "n/a" : format_mean_std(a.mean_misclassifications, a.std_misclassifications);
    if (a.runs == 1) {
      mis += " *";
      footnote = true;
    }
    const std::string epochs = a.runs == 0 ? "n/a"
                               : a.min_epochs == a.max_epochs
                                   ? std::to_string(a.min_epochs)
                                   : std::to_string(a.min_epochs) + "-" + std::to_string(a.max_epochs);
    out += "| " + a.model + " | " + mis + " | " + epochs + " | " + detail::one_decimal(a.mean_minutes) + " |\n";
  }
  if (footnote) out += "\n\\* single run: standard deviation undefined, shown as 0\n";
  out += "\n| Model | Seed | Misclassifications | Trained Epochs | Best Epoch | Stop | Wall (s) | CPU (s) |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    if (r.status == RunStatus::error) {
      out += "| " + r.model + " | " + std::to_string(r.seed) + " | error: " + r.error + " | | | | | |\n";
      continue;
    }
    out += "| " + r.model + " | " + std::to_string(r.seed) + " | " + std::to_string(r.misclassifications) + " | " +
           std::to_string(r.trained_epochs) + " | " + std::to_string(r.best_epoch) + " | " + r.stop_reason + " | " +
           detail::one_decimal(r.wall_time_s) + " | " + detail::one_decimal(r.cpu_time_s) + " |\n";
  }
  return out;
}

inline std::string format_runs_csv(const RunReport& report) {
  std::string out = std::string(kRunsCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += r.model + "," + std::to_string(r.seed_index) + "," + std::to_string(r.seed) + "," +
           (r.status == RunStatus::ok ? "ok" : "error") + "," + std::to_string(r.misclassifications) + "," +
           std::to_string(r.trained_epochs) + "," + std::to_string(r.best_epoch) + "," + r.stop_reason + "," +
           format_double(r.wall_time_s) + "," + format_double(r.cpu_time_s) + "," + err + "\n";
  }
  return out;
}

inline std::vector<ModelAggregate> parse_aggregate_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != detail::split_csv_line(kAggregateCsvHeader))
    throw FormatError("aggregate CSV: unexpected header");
  std::vector<ModelAggregate> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 9) throw FormatError("aggregate CSV: expected 9 columns, got " + std::to_string(c.size()));
    ModelAggregate a;
    a.model = c[0];
    a.runs = detail::parse_unsigned(c[1], "runs");
    a.failed = detail::parse_unsigned(c[2], "failed");
    a.mean_misclassifications = detail::parse_double(c[3], "mean_misclassifications");
    a.std_misclassifications = detail::parse_double(c[4], "std_misclassifications");
    a.std_defined = detail::parse_unsigned(c[5], "std_defined") != 0;
    a.min_epochs = detail::parse_unsigned(c[6], "min_epochs");
    a.max_epochs = detail::parse_unsigned(c[7], "max_epochs");
    a.mean_minutes = detail::parse_double(c[8], "mean_minutes");
    out.push_back(a);
  }
  return out;
}

inline std::vector<RunRow> parse_runs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != detail::split_csv_line(kRunsCsvHeader))
    throw FormatError("runs CSV: unexpected header");
  std::vector<RunRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 11) throw FormatError("runs CSV: expected 11 columns, got " + std::to_string(c.size()));
    RunRow r;
    r.model = c[0];
    r.seed_index = detail::parse_unsigned(c[1], "seed_index");
    r.seed = detail::parse_unsigned(c[2], "seed");
    if (c[3] != "ok" && c[3] != "error") throw FormatError("runs CSV: bad status '" + c[3] + "'");
    r.status = c[3] == "ok" ? RunStatus::ok : RunStatus::error;
    r.misclassifications = detail::parse_unsigned(c[4], "misclassifications");
    r.trained_epochs = detail::parse_unsigned(c[5], "trained_epochs");
    r.best_epoch = detail::parse_unsigned(c[6], "best_epoch");
    r.stop_reason = c[7];
    r.wall_time_s = detail::parse_double(c[8], "wall_time_s");
    r.cpu_time_s = detail::parse_double(c[9], "cpu_time_s");
    r.error = c[10];
    out.push_back(r);
  }
  return out;
}

// ------------------------------------------------------------------ digest --

inline std::string sha256_hex(std::istream& in) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialization failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return sha256_hex(in);
}

inline std::string sha256_string(const std::string& s) {
  std::istringstream in(s);
  return sha256_hex(in);
}

// --------------------------------------------------------------- benchmark --

struct BenchOptions {
  std::size_t n_seeds = 5;
  std::uint64_t base_seed = 0;
  TrainingConfig training{};
  /// (model, seed index, epoch, batch, rows) before every training step.
  std::function<void(const std::string&, std::size_t, std::size_t, std::size_t, std::span<const std::size_t>)>
      on_batch;
  /// After every finished run.
  std::function<void(const RunRow&)> on_run;
  /// Per-epoch progress.
  std::function<void(const std::string&, std::size_t, const EpochRecord&)> on_epoch;
};

/// Seed of run i: child(base_seed, i). Model initialization and the data
/// order both derive from it, so every model sees the same minibatches.
inline std::uint64_t run_seed(std::uint64_t base_seed, std::size_t i) { return child_seed(base_seed, i); }

inline std::size_t class_count(const DatasetSplits& s) {
  std::int64_t hi = -1;
  for (const LabeledDataset* d : {&s.train, &s.validation, &s.test})
    for (auto y : d->labels) hi = std::max(hi, y);
  if (hi < 0) throw ParameterError("dataset has no labels");
  return static_cast<std::size_t>(hi) + 1;
}

inline RunReport run_benchmark(const std::vector<ArchitectureSpec>& specs, const DatasetSplits& data,
                               const BenchOptions& options) {
  if (specs.empty()) throw ParameterError("no models to benchmark");
  if (options.n_seeds == 0) throw ParameterError("n_seeds must be >= 1");
  options.training.validate();
  const std::size_t n_classes = class_count(data);
  RunReport report;
  report.hardware = hardware_description();
  report.timestamp = utc_timestamp();
  report.base_seed = options.base_seed;
  report.n_seeds = options.n_seeds;
  for (const auto& spec : specs) {
    for (std::size_t i = 0; i < options.n_seeds; ++i) {
      RunRow row;
      row.model = spec.name;
      row.seed_index = i;
      row.seed = run_seed(options.base_seed, i);
      try {
        auto built = build_model(spec, data.train.n_datapoints, n_classes, row.seed);
        TrainingConfig tc = options.training;
        tc.seed = row.seed;
        TrainingHooks hooks;
        if (options.on_batch)
          hooks.on_batch = [&](std::size_t epoch, std::size_t batch, std::span<const std::size_t> rows) {
            options.on_batch(spec.name, i, epoch, batch, rows);
          };
        if (options.on_epoch) hooks.on_epoch = [&](const EpochRecord& r) { options.on_epoch(spec.name, i, r); };
        const auto history = train(built.model, data.train, data.validation, tc, hooks);
        const auto eval = evaluate(built.model, data.test);
        row.misclassifications = eval.misclassifications;
        row.trained_epochs = history.trained_epochs();
        row.best_epoch = history.best_epoch;
        row.stop_reason = to_string(history.stop_reason);
        row.wall_time_s = history.wall_time_s;
        row.cpu_time_s = history.cpu_time_s;
      } catch (const std::exception& e) {
        row.status = RunStatus::error;
        row.error = e.what();
      }
      if (options.on_run) options.on_run(row);
      report.rows.push_back(std::move(row));
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  return report;
}

/// Everything needed to re-run a benchmark: specs, dataset digests, seeds,
/// training settings and the machine it ran on.
inline nlohmann::json benchmark_manifest(const std::vector<ArchitectureSpec>& specs,
                                         const std::filesystem::path& data_dir, const BenchOptions& options,
                                         const RunReport& report) {
  nlohmann::json m;
  m["base_seed"] = options.base_seed;
  m["n_seeds"] = options.n_seeds;
  m["seeds"] = nlohmann::json::array();
  for (std::size_t i = 0; i < options.n_seeds; ++i) m["seeds"].push_back(run_seed(options.base_seed, i));
  const auto& t = options.training;
  m["training"] = {{"learning_rate", t.learning_rate},
                   {"batch_size", t.batch_size},
                   {"max_epochs", t.max_epochs},
                   {"plateau_factor", t.plateau_factor},
                   {"plateau_patience", t.plateau_patience},
                   {"early_stop_patience", t.early_stop_patience},
                   {"min_delta", t.min_delta}};
  m["models"] = nlohmann::json::array();
  for (const auto& s : specs)
    m["models"].push_back({{"name", s.name}, {"source", s.source_tag}, {"architecture", s.grammar}});
  m["datasets"] = nlohmann::json::object();
  for (const auto& f : split_file_names()) {
    const auto p = data_dir / f;
    if (std::filesystem::exists(p)) m["datasets"][f] = sha256_file(p);
  }
  m["hardware"] = report.hardware;
  if (!report.timestamp.empty()) m["generated"] = report.timestamp;
  m["complete"] = report.complete();
  return m;
}

}  // namespace synspec
