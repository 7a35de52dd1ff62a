#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synspec/dataset.hpp"
#include "synspec/error.hpp"

namespace synspec {

// Dataset config document, schema_version "1":
//
//   {
//     "schema_version": "1",
//     "generation": {
//       "n_datapoints": 5000, "n_classes": 500, "min_peaks": 2, "max_peaks": 10,
//       "border_margin": 100, "min_peak_separation": 10, "intensity_floor": 0.05,
//       "train_samples_per_class": 60, "val_fraction": 0.16666666666666666,
//       "training_variation": {"max_shift": 50, "max_intensity_delta": 0.05,
//                              "width_min": 2, "width_max": 5,
//                              "intensity_mode": "multiplicative"},
//       "test_grid": {"grid_shift": 25, "grid_intensity_delta": 0.02, "test_width": 2},
//       "master_seed": 7
//     },
//     "fingerprints": [{"id": 0, "positions": [...], "intensities": [...]}, ...]
//   }
//
// Doubles are written as shortest round-trip decimals, so save/load is exact.
inline constexpr const char* kConfigSchemaVersion = "1";

namespace detail {

using json = nlohmann::json;

class JsonReader {
 public:
  explicit JsonReader(std::vector<std::string>* warnings) : warnings_(warnings) {}

  const json& field(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) throw ParseError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(join(path, key), "missing field");
    return *it;
  }

  double number(const json& obj, const std::string& key, const std::string& path) const {
    const auto& v = field(obj, key, path);
    if (!v.is_number()) throw ParseError(join(path, key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t unsigned_integer(const json& obj, const std::string& key, const std::string& path) const {
    const auto& v = field(obj, key, path);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ParseError(join(path, key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const json& obj, const std::string& key, const std::string& path) const {
    const auto& v = field(obj, key, path);
    if (!v.is_string()) throw ParseError(join(path, key), "expected a string");
    return v.get<std::string>();
  }

  void warn_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& path) const {
    if (!warnings_ || !obj.is_object()) return;
    std::set<std::string> names(known.begin(), known.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!names.count(it.key())) warnings_->push_back(join(path, it.key()) + ": unknown field ignored");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::vector<std::string>* warnings_;
};

}  // namespace detail

inline nlohmann::json to_json(const GenerationConfig& g) {
  nlohmann::json tv = {
      {"max_shift", g.training_variation.max_shift},
      {"max_intensity_delta", g.training_variation.max_intensity_delta},
      {"width_min", g.training_variation.width_min},
      {"width_max", g.training_variation.width_max},
      {"intensity_mode",
       g.training_variation.intensity_mode == IntensityMode::multiplicative ? "multiplicative" : "additive"},
  };
  nlohmann::json tg = {
      {"grid_shift", g.test_grid.grid_shift},
      {"grid_intensity_delta", g.test_grid.grid_intensity_delta},
      {"test_width", g.test_grid.test_width},
  };
  return {
      {"n_datapoints", g.n_datapoints},
      {"n_classes", g.n_classes},
      {"min_peaks", g.min_peaks},
      {"max_peaks", g.max_peaks},
      {"border_margin", g.border_margin},
      {"min_peak_separation", g.min_peak_separation},
      {"intensity_floor", g.intensity_floor},
      {"train_samples_per_class", g.train_samples_per_class},
      {"val_fraction", g.val_fraction},
      {"training_variation", tv},
      {"test_grid", tg},
      {"master_seed", g.master_seed},
  };
}

inline nlohmann::json to_json(const DatasetConfig& config) {
  nlohmann::json fps = nlohmann::json::array();
  for (const auto& fp : config.fingerprints) {
    nlohmann::json pos = nlohmann::json::array();
    nlohmann::json inten = nlohmann::json::array();
    for (const auto& p : fp.peaks) {
      pos.push_back(p.position);
      inten.push_back(p.intensity);
    }
    fps.push_back({{"id", fp.class_id}, {"positions", pos}, {"intensities", inten}});
  }
  return {{"schema_version", kConfigSchemaVersion}, {"generation", to_json(config.generation)}, {"fingerprints", fps}};
}

inline GenerationConfig generation_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr,
                                             const std::string& path = "generation") {
  detail::JsonReader r(warnings);
  GenerationConfig g;
  g.n_datapoints = r.unsigned_integer(j, "n_datapoints", path);
  g.n_classes = r.unsigned_integer(j, "n_classes", path);
  g.min_peaks = r.unsigned_integer(j, "min_peaks", path);
  g.max_peaks = r.unsigned_integer(j, "max_peaks", path);
  g.border_margin = r.number(j, "border_margin", path);
  g.min_peak_separation = r.number(j, "min_peak_separation", path);
  g.intensity_floor = r.number(j, "intensity_floor", path);
  g.train_samples_per_class = r.unsigned_integer(j, "train_samples_per_class", path);
  g.val_fraction = r.number(j, "val_fraction", path);
  g.master_seed = r.unsigned_integer(j, "master_seed", path);
  r.warn_unknown(j,
                 {"n_datapoints", "n_classes", "min_peaks", "max_peaks", "border_margin", "min_peak_separation",
                  "intensity_floor", "train_samples_per_class", "val_fraction", "training_variation", "test_grid",
                  "master_seed"},
                 path);

  const std::string tv_path = path + ".training_variation";
  const auto& tv = r.field(j, "training_variation", path);
  g.training_variation.max_shift = r.number(tv, "max_shift", tv_path);
  g.training_variation.max_intensity_delta = r.number(tv, "max_intensity_delta", tv_path);
  g.training_variation.width_min = r.number(tv, "width_min", tv_path);
  g.training_variation.width_max = r.number(tv, "width_max", tv_path);
  if (tv.contains("intensity_mode")) {
    const auto mode = r.string(tv, "intensity_mode", tv_path);
    if (mode == "multiplicative") {
      g.training_variation.intensity_mode = IntensityMode::multiplicative;
    } else if (mode == "additive") {
      g.training_variation.intensity_mode = IntensityMode::additive;
    } else {
      throw ParseError(tv_path + ".intensity_mode", "expected \"multiplicative\" or \"additive\", got \"" + mode + "\"");
    }
  }
  r.warn_unknown(tv, {"max_shift", "max_intensity_delta", "width_min", "width_max", "intensity_mode"}, tv_path);

  const std::string tg_path = path + ".test_grid";
  const auto& tg = r.field(j, "test_grid", path);
  g.test_grid.grid_shift = r.number(tg, "grid_shift", tg_path);
  g.test_grid.grid_intensity_delta = r.number(tg, "grid_intensity_delta", tg_path);
  g.test_grid.test_width = r.number(tg, "test_width", tg_path);
  r.warn_unknown(tg, {"grid_shift", "grid_intensity_delta", "test_width"}, tg_path);
  return g;
}

/// Parses and validates a config document. Unknown fields are reported
/// through `warnings` and otherwise ignored.
inline DatasetConfig config_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr) {
  detail::JsonReader r(warnings);
  const auto version = r.string(j, "schema_version", "");
  if (version != kConfigSchemaVersion)
    throw ParseError("schema_version", "unsupported schema version \"" + version + "\" (expected \"" +
                                           kConfigSchemaVersion + "\")");
  r.warn_unknown(j, {"schema_version", "generation", "fingerprints"}, "");

  DatasetConfig config;
  config.generation = generation_from_json(r.field(j, "generation", ""), warnings);

  const auto& fps = r.field(j, "fingerprints", "");
  if (!fps.is_array()) throw ParseError("fingerprints", "expected an array");
  config.fingerprints.reserve(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    const std::string path = "fingerprints[" + std::to_string(i) + "]";
    const auto& f = fps[i];
    ClassFingerprint fp;
    fp.class_id = static_cast<int>(r.unsigned_integer(f, "id", path));
    const auto& pos = r.field(f, "positions", path);
    const auto& inten = r.field(f, "intensities", path);
    if (!pos.is_array()) throw ParseError(path + ".positions", "expected an array");
    if (!inten.is_array()) throw ParseError(path + ".intensities", "expected an array");
    if (pos.size() != inten.size()) throw ParseError(path, "positions and intensities differ in length");
    for (std::size_t k = 0; k < pos.size(); ++k) {
      if (!pos[k].is_number()) throw ParseError(path + ".positions[" + std::to_string(k) + "]", "expected a number");
      if (!inten[k].is_number())
        throw ParseError(path + ".intensities[" + std::to_string(k) + "]", "expected a number");
      fp.peaks.push_back({pos[k].get<double>(), inten[k].get<double>()});
    }
    r.warn_unknown(f, {"id", "positions", "intensities"}, path);
    config.fingerprints.push_back(std::move(fp));
  }
  config.validate();
  return config;
}

inline std::string dump_config(const DatasetConfig& config) { return to_json(config).dump(2) + "\n"; }

inline void save_config(const DatasetConfig& config, const std::string& path) {
  config.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << dump_config(config);
  if (!out) throw Error("failed writing " + path);
}

inline DatasetConfig parse_config(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j, warnings);
}

inline DatasetConfig load_config(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), warnings);
}

// ---------------------------------------------------------------- presets --

/// Generation settings by preset name: "paper500" (full scale) or "desk"
/// (50 classes on 1000 datapoints, every length scaled down by 5).
inline std::optional<GenerationConfig> generation_preset(std::string_view name) {
  GenerationConfig g;
  if (name == "paper500") return g;
  if (name == "desk") {
    g.n_datapoints = 1000;
    g.n_classes = 50;
    g.min_peaks = 2;
    g.max_peaks = 6;
    g.border_margin = 20.0;
    g.min_peak_separation = 2.0;
    g.training_variation.max_shift = 10.0;
    g.test_grid.grid_shift = 5.0;
    return g;
  }
  return std::nullopt;
}

inline constexpr const char* kPresetNames[] = {"desk", "paper500"};

}  // namespace synspec
