#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "synspec/error.hpp"
#include "synspec/spectra.hpp"

namespace synspec {

/// Non-negligible part of a spectrum stored as runs of consecutive indices.
///
/// Entries below `relative_cutoff * max` are dropped. With the default cutoff
/// the effect on any cosine similarity is far below double rounding of the
/// values that matter, while the work per comparison drops by an order of
/// magnitude for narrow peaks.
class SparseProfile {
 public:
  static constexpr double kDefaultCutoff = 1e-12;

  SparseProfile() = default;

  template <typename T>
  explicit SparseProfile(std::span<const T> dense, double relative_cutoff = kDefaultCutoff) : size_(dense.size()) {
    double peak = 0.0;
    for (T v : dense) peak = std::max(peak, static_cast<double>(v));
    const double cut = peak * relative_cutoff;
    double sq = 0.0;
    bool open = false;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      const double v = static_cast<double>(dense[i]);
      if (v > cut && v > 0.0) {
        if (!open) {
          runs_.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(i), values_.size()});
          open = true;
        }
        runs_.back().end = static_cast<std::int64_t>(i) + 1;
        values_.push_back(v);
        sq += v * v;
      } else {
        open = false;
      }
    }
    norm_ = std::sqrt(sq);
  }

  std::size_t size() const noexcept { return size_; }
  double norm() const noexcept { return norm_; }
  bool empty() const noexcept { return runs_.empty(); }
  std::int64_t first() const noexcept { return runs_.empty() ? 0 : runs_.front().begin; }
  std::int64_t last() const noexcept { return runs_.empty() ? 0 : runs_.back().end; }

  /// sum_x this[x] * other[x - lag], accumulated in increasing x.
  double lagged_dot(const SparseProfile& other, std::int64_t lag) const noexcept {
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    while (i < runs_.size() && j < other.runs_.size()) {
      const Run& a = runs_[i];
      const Run& b = other.runs_[j];
      const std::int64_t lo = std::max(a.begin, b.begin + lag);
      const std::int64_t hi = std::min(a.end, b.end + lag);
      if (lo < hi) {
        const double* pa = values_.data() + a.offset + (lo - a.begin);
        const double* pb = other.values_.data() + b.offset + (lo - lag - b.begin);
        for (std::int64_t k = 0; k < hi - lo; ++k) acc += pa[k] * pb[k];
      }
      if (a.end < b.end + lag) {
        ++i;
      } else {
        ++j;
      }
    }
    return acc;
  }

  /// Largest cosine similarity over integer lags in [-max_lag, max_lag].
  double max_cosine(const SparseProfile& reference, std::int64_t max_lag) const noexcept {
    if (empty() || reference.empty()) return 0.0;
    // No lag in range can make the supports touch.
    if (reference.first() - max_lag >= last() || reference.last() + max_lag <= first()) return 0.0;
    double best = 0.0;
    for (std::int64_t lag = -max_lag; lag <= max_lag; ++lag) {
      best = std::max(best, lagged_dot(reference, lag));
    }
    return best / (norm_ * reference.norm_);
  }

 private:
  struct Run {
    std::int64_t begin;
    std::int64_t end;
    std::size_t offset;
  };
  std::vector<Run> runs_;
  std::vector<double> values_;
  std::size_t size_ = 0;
  double norm_ = 0.0;
};

struct OracleResult {
  int class_id = -1;
  double similarity = 0.0;
  int runner_up_id = -1;
  double runner_up_similarity = 0.0;
  bool tie = false;  // another class reached the same similarity
};

/// Nearest-reference classifier over ideal class renders.
///
/// Each class is rendered from its ideal fingerprint at the test width. A
/// query is assigned to the class with the largest cosine similarity, where
/// the reference may be slid by up to `max_lag` datapoints (the global shift
/// of the test grid). Ties go to the lower class id and are flagged.
class ReferenceLibrary {
 public:
  ReferenceLibrary(std::span<const ClassFingerprint> fingerprints, double width, std::size_t n_datapoints,
                   std::int64_t max_lag)
      : n_datapoints_(n_datapoints), max_lag_(max_lag), width_(width) {
    references_.reserve(fingerprints.size());
    for (const auto& fp : fingerprints) references_.push_back(profile_of(fp));
  }

  std::size_t size() const noexcept { return references_.size(); }
  std::size_t n_datapoints() const noexcept { return n_datapoints_; }
  std::int64_t max_lag() const noexcept { return max_lag_; }
  const SparseProfile& reference(std::size_t class_id) const { return references_.at(class_id); }

  void replace(std::size_t class_id, const ClassFingerprint& fp) { references_.at(class_id) = profile_of(fp); }

  double similarity(const SparseProfile& query, std::size_t class_id) const {
    return query.max_cosine(references_[class_id], max_lag_);
  }

  template <typename T>
  OracleResult classify(std::span<const T> spectrum) const {
    if (spectrum.size() != n_datapoints_)
      throw ShapeError("spectrum length " + std::to_string(spectrum.size()) + " does not match " +
                       std::to_string(n_datapoints_));
    const SparseProfile query(spectrum);
    if (query.norm() == 0.0) throw DomainError("cannot classify a zero-norm spectrum");
    return classify(query);
  }

  OracleResult classify(const SparseProfile& query) const {
    OracleResult r;
    for (std::size_t c = 0; c < references_.size(); ++c) {
      const double s = similarity(query, c);
      const int id = static_cast<int>(c);
      if (r.class_id < 0 || s > r.similarity) {
        r.runner_up_id = r.class_id;
        r.runner_up_similarity = r.similarity;
        r.class_id = id;
        r.similarity = s;
        r.tie = false;
      } else {
        if (s == r.similarity) r.tie = true;
        if (r.runner_up_id < 0 || s > r.runner_up_similarity) {
          r.runner_up_id = id;
          r.runner_up_similarity = s;
        }
      }
    }
    return r;
  }

 private:
  SparseProfile profile_of(const ClassFingerprint& fp) const {
    std::vector<double> dense(n_datapoints_);
    render_into(dense, fp.peaks, width_, true);
    return SparseProfile(std::span<const double>(dense));
  }

  std::size_t n_datapoints_;
  std::int64_t max_lag_;
  double width_;
  std::vector<SparseProfile> references_;
};

}  // namespace synspec
