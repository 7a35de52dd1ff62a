#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "synspec/dataset.hpp"

using namespace synspec;

namespace {

GenerationConfig small_config(std::uint64_t seed = 3) {
  GenerationConfig g;
  g.n_datapoints = 400;
  g.n_classes = 8;
  g.min_peaks = 2;
  g.max_peaks = 5;
  g.border_margin = 40.0;
  g.min_peak_separation = 2.0;
  g.training_variation.max_shift = 10.0;
  g.test_grid.grid_shift = 5.0;
  g.master_seed = seed;
  return g;
}

// Dense reference for the shift-tolerant cosine.
double dense_max_cosine(const std::vector<double>& q, const std::vector<double>& r, int max_lag) {
  double nq = 0.0, nr = 0.0;
  for (double v : q) nq += v * v;
  for (double v : r) nr += v * v;
  double best = 0.0;
  const int n = static_cast<int>(q.size());
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) {
      const int j = i - lag;
      if (j >= 0 && j < n) dot += q[i] * r[j];
    }
    best = std::max(best, dot);
  }
  return best / std::sqrt(nq * nr);
}

}  // namespace

TEST(Fingerprint, GeneratedFingerprintsSatisfyInvariants) {
  const auto g = small_config();
  for (std::size_t c = 0; c < 200; ++c) {
    const auto fp = generate_class_fingerprint(g, static_cast<int>(c), streams::fingerprint(9, c, 0));
    ASSERT_NO_THROW(validate_fingerprint(fp, g.n_datapoints, g.border_margin, g.min_peaks, g.max_peaks));
    for (std::size_t i = 1; i < fp.peaks.size(); ++i)
      ASSERT_GE(fp.peaks[i].position - fp.peaks[i - 1].position, g.min_peak_separation);
    for (const auto& p : fp.peaks) ASSERT_GE(p.intensity, g.intensity_floor - 1e-12);
  }
}

TEST(Fingerprint, SinglePeakIsUnitIntensity) {
  auto g = small_config();
  g.min_peaks = g.max_peaks = 1;
  for (std::size_t c = 0; c < 20; ++c) {
    const auto fp = generate_class_fingerprint(g, 0, streams::fingerprint(1, c, 0));
    ASSERT_EQ(fp.peaks.size(), 1u);
    EXPECT_EQ(fp.peaks[0].intensity, 1.0);
  }
}

TEST(Fingerprint, ImpossibleSeparationIsConfigError) {
  auto g = small_config();
  g.min_peaks = g.max_peaks = 10;
  g.min_peak_separation = 100.0;
  EXPECT_THROW(generate_class_fingerprint(g, 0, RandomStream(1)), ConfigError);
}

TEST(Oracle, SparseMatchesDenseReference) {
  const auto g = small_config();
  const auto cfg = generate_dataset_config(g);
  RandomStream r(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& a = cfg.fingerprints[r.below(g.n_classes)];
    const auto& b = cfg.fingerprints[r.below(g.n_classes)];
    const auto qa = render_spectrum(a, 2.0, g.n_datapoints).values;
    const auto rb = render_spectrum(b, 2.0, g.n_datapoints).values;
    const SparseProfile sq{std::span<const double>(qa)}, sr{std::span<const double>(rb)};
    EXPECT_NEAR(sq.max_cosine(sr, 5), dense_max_cosine(qa, rb, 5), 1e-12);
  }
}

TEST(Oracle, OrthogonalClassesScoreZero) {
  const std::vector<ClassFingerprint> fps{{0, {{50.0, 1.0}}}, {1, {{300.0, 1.0}}}};
  const ReferenceLibrary lib(fps, 2.0, 400, 5);
  const auto s = render_spectrum(fps[0], 2.0, 400).values;
  const auto r = lib.classify(std::span<const double>(s));
  EXPECT_EQ(r.class_id, 0);
  EXPECT_NEAR(r.similarity, 1.0, 1e-12);
  EXPECT_EQ(r.runner_up_id, 1);
  EXPECT_EQ(r.runner_up_similarity, 0.0);
  EXPECT_FALSE(r.tie);
}

TEST(Oracle, IdenticalClassesTieTowardLowerId) {
  const std::vector<ClassFingerprint> fps{{0, {{50.0, 1.0}}}, {1, {{200.0, 1.0}}}, {2, {{200.0, 1.0}}}};
  const ReferenceLibrary lib(fps, 2.0, 400, 5);
  const auto s = render_spectrum(fps[2], 2.0, 400).values;
  const auto r = lib.classify(std::span<const double>(s));
  EXPECT_EQ(r.class_id, 1);
  EXPECT_TRUE(r.tie);
}

TEST(Oracle, RejectsWrongLengthAndZeroSpectrum) {
  const std::vector<ClassFingerprint> fps{{0, {{50.0, 1.0}}}};
  const ReferenceLibrary lib(fps, 2.0, 400, 5);
  const std::vector<float> short_row(399, 1.0f), zeros(400, 0.0f);
  EXPECT_THROW(lib.classify(std::span<const float>(short_row)), ShapeError);
  EXPECT_THROW(lib.classify(std::span<const float>(zeros)), DomainError);
}

TEST(Separability, DisjointClassesHaveNoViolations) {
  DatasetConfig cfg;
  cfg.generation = small_config();
  cfg.generation.n_classes = 2;
  cfg.fingerprints = {{0, {{60.0, 1.0}, {90.0, 0.5}}}, {1, {{250.0, 0.4}, {300.0, 1.0}}}};
  EXPECT_TRUE(validate_separability(cfg).empty());
}

TEST(Separability, DuplicateClassesViolateEveryVariant) {
  DatasetConfig cfg;
  cfg.generation = small_config();
  cfg.generation.n_classes = 2;
  cfg.fingerprints = {{0, {{60.0, 1.0}, {90.0, 0.5}}}, {1, {{60.0, 1.0}, {90.0, 0.5}}}};
  const auto v = validate_separability(cfg);
  ASSERT_EQ(v.size(), 18u);
  for (const auto& x : v) {
    EXPECT_TRUE(x.tie);
    EXPECT_EQ(x.nearest_class_id, 1 - x.class_id);
  }
}

TEST(Separability, GeneratedConfigIsSeparableAndOracleAgrees) {
  GenerationReport rep;
  const auto cfg = generate_dataset_config(small_config(), &rep);
  EXPECT_TRUE(validate_separability(cfg).empty());
  const auto splits = build_dataset(cfg);
  const ReferenceLibrary lib(cfg.fingerprints, 2.0, 400, 5);
  for (std::size_t i = 0; i < splits.test.rows(); ++i) {
    const auto r = lib.classify(splits.test.row(i));
    ASSERT_EQ(r.class_id, splits.test.labels[i]) << "row " << i;
    ASSERT_FALSE(r.tie);
  }
}

TEST(Dataset, CardinalitiesAndLabelCoverage) {
  const auto cfg = generate_dataset_config(small_config());
  const auto s = build_dataset(cfg);
  EXPECT_EQ(s.train.rows(), 8u * 50u);
  EXPECT_EQ(s.validation.rows(), 8u * 10u);
  EXPECT_EQ(s.test.rows(), 8u * 9u);
  for (const auto* d : {&s.train, &s.validation, &s.test}) {
    EXPECT_EQ(d->spectra.size(), d->rows() * 400u);
    std::map<std::int64_t, std::size_t> counts;
    for (auto l : d->labels) ++counts[l];
    EXPECT_EQ(counts.size(), 8u);
    for (const auto& [label, n] : counts) EXPECT_EQ(n, d->rows() / 8u) << "label " << label;
    for (std::size_t i = 0; i < d->rows(); ++i) {
      const auto row = d->row(i);
      ASSERT_EQ(*std::max_element(row.begin(), row.end()), 1.0f);
      ASSERT_GE(*std::min_element(row.begin(), row.end()), 0.0f);
    }
  }
  EXPECT_EQ(s.train.role, SplitRole::train);
  EXPECT_EQ(s.validation.role, SplitRole::validation);
  EXPECT_EQ(s.test.role, SplitRole::test);
}

TEST(Dataset, NoRowRepeatsAcrossSplits) {
  // Test rows are excluded: normalization cancels the grid's intensity scale,
  // so each shift yields three equal rows.
  const auto s = build_dataset(generate_dataset_config(small_config()));
  std::set<std::vector<float>> seen;
  std::size_t total = 0;
  for (const auto* d : {&s.train, &s.validation})
    for (std::size_t i = 0; i < d->rows(); ++i) {
      const auto row = d->row(i);
      seen.emplace(row.begin(), row.end());
      ++total;
    }
  std::set<std::vector<float>> test_rows;
  for (std::size_t i = 0; i < s.test.rows(); ++i) test_rows.emplace(s.test.row(i).begin(), s.test.row(i).end());
  EXPECT_EQ(test_rows.size(), s.test.rows() / 3);
  for (const auto& r : test_rows) seen.insert(r);
  EXPECT_EQ(seen.size(), total + test_rows.size());
}

TEST(Dataset, TestRowsAreDeterministicRenders) {
  const auto cfg = generate_dataset_config(small_config());
  const auto s = build_dataset(cfg);
  const auto grid = build_test_grid(cfg.fingerprints[5], cfg.generation.test_grid);
  for (std::size_t k = 0; k < kTestGridSize; ++k) {
    const auto want = render_spectrum(grid[k].fingerprint, 2.0, 400).values;
    const auto row = s.test.row(5 * kTestGridSize + k);
    for (std::size_t i = 0; i < 400; ++i) ASSERT_EQ(row[i], static_cast<float>(want[i]));
  }
}

TEST(Dataset, IdenticalAcrossThreadCounts) {
  const auto g = small_config(21);
  set_num_threads(1);
  const auto c1 = generate_dataset_config(g);
  const auto s1 = build_dataset(c1);
  set_num_threads(8);
  const auto c8 = generate_dataset_config(g);
  const auto s8 = build_dataset(c8);
  set_num_threads(0);
  EXPECT_EQ(c1, c8);
  EXPECT_EQ(s1.train.spectra, s8.train.spectra);
  EXPECT_EQ(s1.validation.spectra, s8.validation.spectra);
  EXPECT_EQ(s1.test.spectra, s8.test.spectra);
  EXPECT_EQ(s1.train.labels, s8.train.labels);
}

TEST(Dataset, SeedsChangeEverything) {
  const auto a = generate_dataset_config(small_config(1));
  const auto b = generate_dataset_config(small_config(2));
  EXPECT_NE(a.fingerprints, b.fingerprints);
}

TEST(Dataset, ClassStreamsAreIsolated) {
  // Replacing one class's fingerprint leaves every other class's rows unchanged.
  auto cfg = generate_dataset_config(small_config());
  const auto before = build_dataset(cfg);
  cfg.fingerprints[3] = ClassFingerprint{3, {{200.0, 1.0}, {210.0, 0.3}}};
  const auto after = build_dataset(cfg);
  for (std::size_t i = 0; i < before.train.rows(); ++i) {
    const bool same = std::ranges::equal(before.train.row(i), after.train.row(i));
    ASSERT_EQ(same, before.train.labels[i] != 3) << "row " << i;
  }
}

TEST(Dataset, InvalidConfigsAreRejected) {
  auto g = small_config();
  g.border_margin = 5.0;  // below training max_shift
  EXPECT_THROW(g.validate(), ConfigError);
  g = small_config();
  g.max_peaks = 1;
  EXPECT_THROW(g.validate(), ConfigError);
  DatasetConfig cfg;
  cfg.generation = small_config();
  cfg.generation.n_classes = 1;
  cfg.fingerprints = {{0, {{10.0, 1.0}, {50.0, 0.5}}}};
  EXPECT_THROW(cfg.validate(), ConfigError);
}
