#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "synspec/error.hpp"
#include "synspec/random.hpp"

namespace synspec {

struct Peak {
  double position = 0.0;   // datapoint index, real-valued
  double intensity = 0.0;  // relative height

  friend bool operator==(const Peak&, const Peak&) = default;
};

/// Discrete peaks that define one class, sorted ascending by position.
struct ClassFingerprint {
  int class_id = 0;
  std::vector<Peak> peaks;

  friend bool operator==(const ClassFingerprint&, const ClassFingerprint&) = default;
};

enum class IntensityMode { multiplicative, additive };

/// Random per-sample alterations applied to training spectra.
struct VariationConfig {
  double max_shift = 50.0;
  double max_intensity_delta = 0.05;
  double width_min = 2.0;
  double width_max = 5.0;
  IntensityMode intensity_mode = IntensityMode::multiplicative;

  void validate() const {
    if (!(max_shift >= 0.0)) throw ParameterError("max_shift must be >= 0");
    if (!(max_intensity_delta >= 0.0 && max_intensity_delta < 1.0))
      throw ParameterError("max_intensity_delta must lie in [0, 1)");
    if (!(width_min > 0.0)) throw ParameterError("width range lower bound must be > 0");
    if (!(width_max >= width_min)) throw ParameterError("width range upper bound below lower bound");
  }

  friend bool operator==(const VariationConfig&, const VariationConfig&) = default;
};

/// Deterministic 3x3 grid of global alterations used for test spectra.
struct TestGridConfig {
  double grid_shift = 25.0;
  double grid_intensity_delta = 0.02;
  double test_width = 2.0;

  void validate() const {
    if (!(grid_shift >= 0.0)) throw ParameterError("grid_shift must be >= 0");
    if (!(grid_intensity_delta >= 0.0 && grid_intensity_delta < 1.0))
      throw ParameterError("grid_intensity_delta must lie in [0, 1)");
    if (!(test_width > 0.0)) throw ParameterError("test_width must be > 0");
  }

  // Test alterations must stay strictly weaker than the training ones. The
  // all-zero degenerate configuration is allowed so grids can be disabled.
  void validate_against(const VariationConfig& training) const {
    validate();
    const bool shift_ok = grid_shift < training.max_shift || (grid_shift == 0.0 && training.max_shift == 0.0);
    const bool delta_ok = grid_intensity_delta < training.max_intensity_delta ||
                          (grid_intensity_delta == 0.0 && training.max_intensity_delta == 0.0);
    if (!shift_ok) throw ParameterError("grid_shift must be smaller than the training max_shift");
    if (!delta_ok) throw ParameterError("grid_intensity_delta must be smaller than the training max_intensity_delta");
  }

  friend bool operator==(const TestGridConfig&, const TestGridConfig&) = default;
};

struct Spectrum {
  std::vector<double> values;
  int label = 0;
};

/// A fingerprint after alteration plus the Gaussian width to render it with.
struct Variant {
  ClassFingerprint fingerprint;
  double width = 0.0;
};

inline constexpr std::size_t kTestGridSize = 9;
inline constexpr std::size_t kIdealGridIndex = 4;  // zero shift, unit scale

namespace detail {

// exp(x) is exactly +0.0 for x below this in IEEE double, so skipping those
// grid points yields the same bits as evaluating the whole vector.
inline constexpr double kExpUnderflow = -746.0;

inline void check_width(double width) {
  if (!(width > 0.0) || !std::isfinite(width)) throw ParameterError("Gaussian width must be > 0, got " + std::to_string(width));
}

inline void check_positions(std::span<const Peak> peaks, std::size_t n) {
  for (const auto& p : peaks) {
    if (!(p.position >= 0.0 && p.position < static_cast<double>(n)))
      throw DomainError("peak position " + std::to_string(p.position) + " outside [0, " + std::to_string(n) + ")");
  }
}

}  // namespace detail

/// Accumulates intensity * exp(-(x - position)^2 / (2 width^2)) for every
/// peak at integer x into `out` (which is zeroed first), then optionally
/// rescales so the maximum is exactly 1. An all-zero result is left as is.
inline void render_into(std::span<double> out, std::span<const Peak> peaks, double width, bool normalize = true) {
  detail::check_width(width);
  const std::size_t n = out.size();
  detail::check_positions(peaks, n);
  std::fill(out.begin(), out.end(), 0.0);
  const double inv_two_var = 1.0 / (2.0 * width * width);
  const double reach = std::sqrt(-detail::kExpUnderflow / inv_two_var);
  for (const auto& peak : peaks) {
    const double lo = std::max(0.0, std::ceil(peak.position - reach));
    const double hi = std::min(static_cast<double>(n) - 1.0, std::floor(peak.position + reach));
    const auto begin = static_cast<std::size_t>(lo);
    const auto end = static_cast<std::size_t>(hi) + 1;
    for (std::size_t x = begin; x < end; ++x) {
      const double d = static_cast<double>(x) - peak.position;
      out[x] += peak.intensity * std::exp(-(d * d) * inv_two_var);
    }
  }
  if (normalize) {
    const double peak_value = n ? *std::max_element(out.begin(), out.end()) : 0.0;
    if (peak_value > 0.0) {
      for (auto& v : out) v /= peak_value;
    }
  }
}

inline Spectrum render_spectrum(const ClassFingerprint& fingerprint, double width, std::size_t n_datapoints,
                                bool normalize = true) {
  Spectrum s;
  s.values.resize(n_datapoints);
  s.label = fingerprint.class_id;
  render_into(s.values, fingerprint.peaks, width, normalize);
  return s;
}

/// Checks the ClassFingerprint invariants against generation parameters.
inline void validate_fingerprint(const ClassFingerprint& fp, std::size_t n_datapoints, double border_margin,
                                 std::size_t min_peaks, std::size_t max_peaks) {
  const std::string who = "class " + std::to_string(fp.class_id) + ": ";
  if (fp.peaks.size() < min_peaks || fp.peaks.size() > max_peaks)
    throw DomainError(who + "peak count " + std::to_string(fp.peaks.size()) + " outside [" +
                      std::to_string(min_peaks) + ", " + std::to_string(max_peaks) + "]");
  const double hi = static_cast<double>(n_datapoints) - border_margin - 1.0;
  bool has_unit = false;
  for (std::size_t i = 0; i < fp.peaks.size(); ++i) {
    const auto& p = fp.peaks[i];
    if (!(p.position >= border_margin && p.position <= hi))
      throw DomainError(who + "peak position " + std::to_string(p.position) + " violates border margin " +
                        std::to_string(border_margin));
    if (!(p.intensity > 0.0 && p.intensity <= 1.0))
      throw DomainError(who + "ideal peak intensity must lie in (0, 1]");
    if (i > 0 && p.position < fp.peaks[i - 1].position) throw DomainError(who + "peaks not sorted by position");
    has_unit = has_unit || p.intensity == 1.0;
  }
  if (!fp.peaks.empty() && !has_unit) throw DomainError(who + "no peak with intensity exactly 1.0");
}

/// Perturbs each peak independently (position shift, intensity change) and
/// draws one Gaussian width for the whole sample.
inline Variant sample_training_variant(const ClassFingerprint& fingerprint, const VariationConfig& var,
                                       RandomStream& rng, std::size_t n_datapoints) {
  var.validate();
  Variant out;
  out.fingerprint.class_id = fingerprint.class_id;
  out.fingerprint.peaks.reserve(fingerprint.peaks.size());
  for (const auto& p : fingerprint.peaks) {
    const double shift = rng.uniform(-var.max_shift, var.max_shift);
    const double delta = rng.uniform(-var.max_intensity_delta, var.max_intensity_delta);
    Peak q;
    q.position = p.position + shift;
    q.intensity = var.intensity_mode == IntensityMode::multiplicative ? p.intensity * (1.0 + delta) : p.intensity + delta;
    if (!(q.position >= 0.0 && q.position < static_cast<double>(n_datapoints)))
      throw DomainError("class " + std::to_string(fingerprint.class_id) + ": shifted peak position " +
                        std::to_string(q.position) + " leaves [0, " + std::to_string(n_datapoints) + ")");
    out.fingerprint.peaks.push_back(q);
  }
  out.width = rng.uniform(var.width_min, var.width_max);
  return out;
}

/// Cartesian product of global shift {-s, 0, +s} (outer) and global intensity
/// scale {1-d, 1, 1+d} (inner). Index kIdealGridIndex is the unaltered fingerprint.
inline std::array<Variant, kTestGridSize> build_test_grid(const ClassFingerprint& fingerprint,
                                                          const TestGridConfig& grid) {
  grid.validate();
  const std::array<double, 3> shifts{-grid.grid_shift, 0.0, grid.grid_shift};
  const std::array<double, 3> scales{1.0 - grid.grid_intensity_delta, 1.0, 1.0 + grid.grid_intensity_delta};
  std::array<Variant, kTestGridSize> out;
  for (std::size_t si = 0; si < 3; ++si) {
    for (std::size_t ki = 0; ki < 3; ++ki) {
      auto& v = out[si * 3 + ki];
      v.width = grid.test_width;
      v.fingerprint.class_id = fingerprint.class_id;
      v.fingerprint.peaks = fingerprint.peaks;
      for (auto& p : v.fingerprint.peaks) {
        p.position += shifts[si];
        p.intensity *= scales[ki];
      }
    }
  }
  return out;
}

}  // namespace synspec
