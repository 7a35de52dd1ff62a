#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "synspec/error.hpp"
#include "synspec/oracle.hpp"
#include "synspec/parallel.hpp"
#include "synspec/random.hpp"
#include "synspec/spectra.hpp"

namespace synspec {

struct GenerationConfig {
  std::size_t n_datapoints = 5000;
  std::size_t n_classes = 500;
  std::size_t min_peaks = 2;
  std::size_t max_peaks = 10;
  double border_margin = 100.0;
  double min_peak_separation = 10.0;
  double intensity_floor = 0.05;
  std::size_t train_samples_per_class = 60;
  double val_fraction = 1.0 / 6.0;
  VariationConfig training_variation{};
  TestGridConfig test_grid{};
  std::uint64_t master_seed = 0;

  void validate() const {
    if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
    if (min_peaks < 1) throw ConfigError("min_peaks must be >= 1");
    if (max_peaks < min_peaks) throw ConfigError("max_peaks must be >= min_peaks");
    if (!(border_margin >= 0.0)) throw ConfigError("border_margin must be >= 0");
    if (!(static_cast<double>(n_datapoints) > 2.0 * border_margin + 1.0))
      throw ConfigError("n_datapoints must exceed 2 * border_margin");
    if (!(min_peak_separation >= 0.0)) throw ConfigError("min_peak_separation must be >= 0");
    if (!(intensity_floor > 0.0 && intensity_floor <= 1.0)) throw ConfigError("intensity_floor must lie in (0, 1]");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
    try {
      training_variation.validate();
      test_grid.validate_against(training_variation);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    // Shifted peaks (training or test) must stay on the grid.
    if (border_margin < training_variation.max_shift)
      throw ConfigError("border_margin must be >= training max_shift so shifted peaks stay in range");
  }

  std::size_t validation_per_class() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(train_samples_per_class) * val_fraction));
  }
  std::size_t training_per_class() const { return train_samples_per_class - validation_per_class(); }

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

struct DatasetConfig {
  GenerationConfig generation;
  std::vector<ClassFingerprint> fingerprints;

  void validate() const {
    generation.validate();
    if (fingerprints.size() != generation.n_classes)
      throw ConfigError("expected " + std::to_string(generation.n_classes) + " fingerprints, found " +
                        std::to_string(fingerprints.size()));
    for (std::size_t c = 0; c < fingerprints.size(); ++c) {
      if (fingerprints[c].class_id != static_cast<int>(c))
        throw ConfigError("fingerprint at index " + std::to_string(c) + " carries class_id " +
                          std::to_string(fingerprints[c].class_id));
      try {
        validate_fingerprint(fingerprints[c], generation.n_datapoints, generation.border_margin,
                             generation.min_peaks, generation.max_peaks);
      } catch (const DomainError& e) {
        throw ConfigError(e.what());
      }
    }
  }

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

enum class SplitRole { train, validation, test };

inline const char* to_string(SplitRole r) {
  switch (r) {
    case SplitRole::train: return "train";
    case SplitRole::validation: return "validation";
    case SplitRole::test: return "test";
  }
  return "?";
}

/// Row-major (n_samples x n_datapoints) float32 spectra with aligned labels.
struct LabeledDataset {
  std::vector<float> spectra;
  std::vector<std::int64_t> labels;
  std::size_t n_datapoints = 0;
  SplitRole role = SplitRole::train;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {spectra.data() + i * n_datapoints, n_datapoints}; }
  std::span<float> row(std::size_t i) { return {spectra.data() + i * n_datapoints, n_datapoints}; }
};

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

struct SeparabilityViolation {
  int class_id = 0;
  int variant_index = 0;
  int nearest_class_id = 0;
  double own_similarity = 0.0;
  double nearest_similarity = 0.0;
  bool tie = false;

  friend bool operator==(const SeparabilityViolation&, const SeparabilityViolation&) = default;
};

namespace streams {

inline RandomStream fingerprint(std::uint64_t master, std::size_t class_id, std::size_t retry) {
  return RandomStream(master).split("fingerprint").split(class_id).split(retry);
}

inline RandomStream samples(std::uint64_t master, std::size_t class_id) {
  return RandomStream(master).split("samples").split(class_id);
}

}  // namespace streams

/// Draws one ideal fingerprint: U{min..max} peaks at uniform positions inside
/// the border margin (positions redrawn until all gaps reach
/// min_peak_separation), uniform intensities in [floor, 1] with the tallest
/// rescaled to exactly 1.
inline ClassFingerprint generate_class_fingerprint(const GenerationConfig& cfg, int class_id, RandomStream rng) {
  cfg.validate();
  constexpr int kMaxAttempts = 1000;
  ClassFingerprint fp;
  fp.class_id = class_id;
  const auto count = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(cfg.min_peaks), static_cast<std::int64_t>(cfg.max_peaks)));
  const double lo = cfg.border_margin;
  const double hi = static_cast<double>(cfg.n_datapoints) - cfg.border_margin - 1.0;

  std::vector<double> positions(count);
  bool placed = false;
  for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
    for (auto& p : positions) p = rng.uniform(lo, hi);
    std::sort(positions.begin(), positions.end());
    placed = true;
    for (std::size_t i = 1; i < count; ++i) {
      if (positions[i] - positions[i - 1] < cfg.min_peak_separation) {
        placed = false;
        break;
      }
    }
  }
  if (!placed)
    throw ConfigError("class " + std::to_string(class_id) + ": could not place " + std::to_string(count) +
                      " peaks with min_peak_separation " + std::to_string(cfg.min_peak_separation) + " inside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "] after " + std::to_string(kMaxAttempts) +
                      " attempts");

  std::vector<double> intensities(count);
  for (auto& v : intensities) v = rng.uniform(cfg.intensity_floor, 1.0);
  const auto tallest = static_cast<std::size_t>(std::max_element(intensities.begin(), intensities.end()) -
                                                intensities.begin());
  const double top = intensities[tallest];
  for (auto& v : intensities) v /= top;
  intensities[tallest] = 1.0;

  fp.peaks.resize(count);
  for (std::size_t i = 0; i < count; ++i) fp.peaks[i] = {positions[i], intensities[i]};
  return fp;
}

namespace detail {

// Rendered test-grid variant of class c, as the oracle sees it.
inline SparseProfile grid_profile(const GenerationConfig& g, const Variant& v) {
  std::vector<double> dense(g.n_datapoints);
  render_into(dense, v.fingerprint.peaks, v.width, true);
  return SparseProfile(std::span<const double>(dense));
}

// similarity[q * n_classes + c] for every test-grid query q against every class.
class SimilarityTable {
 public:
  explicit SimilarityTable(const DatasetConfig& config)
      : config_(config),
        library_(config.fingerprints, config.generation.test_grid.test_width, config.generation.n_datapoints,
                 static_cast<std::int64_t>(std::llround(config.generation.test_grid.grid_shift))),
        n_(config.generation.n_classes),
        table_(n_ * kTestGridSize * n_, 0.0) {
    std::vector<std::size_t> all(n_);
    for (std::size_t c = 0; c < n_; ++c) all[c] = c;
    refresh(all);
  }

  // Recompute everything touched by the listed classes: their queries against
  // all references, and all queries against their references.
  void update(std::span<const std::size_t> changed) {
    for (std::size_t c : changed) library_.replace(c, config_.fingerprints[c]);
    refresh(changed);
  }

  std::vector<SeparabilityViolation> violations() const {
    std::vector<SeparabilityViolation> out;
    for (std::size_t c = 0; c < n_; ++c) {
      for (std::size_t v = 0; v < kTestGridSize; ++v) {
        const double* row = table_.data() + (c * kTestGridSize + v) * n_;
        const double own = row[c];
        int nearest = -1;
        double best = -1.0;
        for (std::size_t o = 0; o < n_; ++o) {
          if (o != c && row[o] > best) {
            best = row[o];
            nearest = static_cast<int>(o);
          }
        }
        if (nearest >= 0 && best >= own) {
          out.push_back({static_cast<int>(c), static_cast<int>(v), nearest, own, best, best == own});
        }
      }
    }
    return out;
  }

 private:
  void refresh(std::span<const std::size_t> changed) {
    std::vector<char> is_changed(n_, 0);
    for (std::size_t c : changed) is_changed[c] = 1;
    const auto& g = config_.generation;
    parallel_for(n_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        const auto grid = build_test_grid(config_.fingerprints[c], g.test_grid);
        for (std::size_t v = 0; v < kTestGridSize; ++v) {
          const SparseProfile query = grid_profile(g, grid[v]);
          double* row = table_.data() + (c * kTestGridSize + v) * n_;
          for (std::size_t o = 0; o < n_; ++o) {
            if (is_changed[c] || is_changed[o]) row[o] = library_.similarity(query, o);
          }
        }
      }
    });
  }

  const DatasetConfig& config_;
  ReferenceLibrary library_;
  std::size_t n_;
  std::vector<double> table_;
};

}  // namespace detail

/// Every test-grid variant whose nearest ideal reference (by shift-tolerant
/// cosine similarity) is not strictly its own class. Empty means separable.
inline std::vector<SeparabilityViolation> validate_separability(const DatasetConfig& config) {
  config.validate();
  return detail::SimilarityTable(config).violations();
}

struct GenerationReport {
  std::size_t resampled_classes = 0;
  std::size_t total_retries = 0;
};

/// Samples all class fingerprints from per-class streams and resamples classes
/// whose test variants are not separable (up to kMaxRetries per class).
inline DatasetConfig generate_dataset_config(const GenerationConfig& cfg, GenerationReport* report = nullptr) {
  constexpr std::size_t kMaxRetries = 50;
  cfg.validate();
  DatasetConfig out;
  out.generation = cfg;
  out.fingerprints.resize(cfg.n_classes);
  parallel_for(cfg.n_classes, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      out.fingerprints[c] = generate_class_fingerprint(cfg, static_cast<int>(c), streams::fingerprint(cfg.master_seed, c, 0));
    }
  });

  std::vector<std::size_t> retries(cfg.n_classes, 0);
  GenerationReport rep;
  detail::SimilarityTable table(out);
  for (;;) {
    const auto violations = table.violations();
    if (violations.empty()) break;
    std::set<std::size_t> failing;
    for (const auto& v : violations) failing.insert(static_cast<std::size_t>(v.class_id));
    std::vector<std::size_t> changed(failing.begin(), failing.end());
    for (std::size_t c : changed) {
      if (retries[c] == kMaxRetries)
        throw ConfigError("class " + std::to_string(c) + " is still not separable after " +
                          std::to_string(kMaxRetries) +
                          " resamples; use fewer classes or smaller test-grid variations");
      if (retries[c] == 0) ++rep.resampled_classes;
      ++retries[c];
      ++rep.total_retries;
      out.fingerprints[c] = generate_class_fingerprint(cfg, static_cast<int>(c),
                                                       streams::fingerprint(cfg.master_seed, c, retries[c]));
    }
    table.update(changed);
  }
  if (report) *report = rep;
  return out;
}

namespace detail {

inline void render_row(std::span<float> row, const Variant& v, std::vector<double>& scratch) {
  scratch.resize(row.size());
  render_into(scratch, v.fingerprint.peaks, v.width, true);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(scratch[i]);
}

}  // namespace detail

/// Renders the training, validation and test splits. Rows are ordered by
/// class, then by sample index. Training/validation rows are random variants
/// (the last validation_per_class() of each class go to validation); test
/// rows are the 3x3 grid.
inline DatasetSplits build_dataset(const DatasetConfig& config) {
  config.validate();
  const auto& g = config.generation;
  const std::size_t n = g.n_datapoints;
  const std::size_t n_val = g.validation_per_class();
  const std::size_t n_train = g.training_per_class();

  DatasetSplits out;
  auto init = [&](LabeledDataset& d, SplitRole role, std::size_t per_class) {
    d.role = role;
    d.n_datapoints = n;
    d.spectra.assign(per_class * g.n_classes * n, 0.0f);
    d.labels.resize(per_class * g.n_classes);
  };
  init(out.train, SplitRole::train, n_train);
  init(out.validation, SplitRole::validation, n_val);
  init(out.test, SplitRole::test, kTestGridSize);

  parallel_for(g.n_classes, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch;
    for (std::size_t c = begin; c < end; ++c) {
      const auto& fp = config.fingerprints[c];
      const RandomStream class_stream = streams::samples(g.master_seed, c);
      for (std::size_t i = 0; i < g.train_samples_per_class; ++i) {
        RandomStream rng = class_stream.split(i);
        const Variant v = sample_training_variant(fp, g.training_variation, rng, n);
        auto& split = i < n_train ? out.train : out.validation;
        const std::size_t r = i < n_train ? c * n_train + i : c * n_val + (i - n_train);
        detail::render_row(split.row(r), v, scratch);
        split.labels[r] = static_cast<std::int64_t>(c);
      }
      const auto grid = build_test_grid(fp, g.test_grid);
      for (std::size_t k = 0; k < kTestGridSize; ++k) {
        const std::size_t r = c * kTestGridSize + k;
        detail::render_row(out.test.row(r), grid[k], scratch);
        out.test.labels[r] = static_cast<std::int64_t>(c);
      }
    }
  });
  return out;
}

}  // namespace synspec
