#include <gtest/gtest.h>

#include <cmath>

#include "synspec/spectra.hpp"

using namespace synspec;

namespace {

// Naive reference: evaluate every peak at every grid point, no windowing.
std::vector<double> naive_render(const std::vector<Peak>& peaks, double width, std::size_t n, bool normalize) {
  std::vector<double> out(n, 0.0);
  for (std::size_t x = 0; x < n; ++x)
    for (const auto& p : peaks) {
      const double d = static_cast<double>(x) - p.position;
      out[x] += p.intensity * std::exp(-d * d / (2.0 * width * width));
    }
  if (normalize) {
    double m = 0.0;
    for (double v : out) m = std::max(m, v);
    if (m > 0.0)
      for (double& v : out) v /= m;
  }
  return out;
}

ClassFingerprint fp(std::vector<Peak> peaks, int id = 0) { return ClassFingerprint{id, std::move(peaks)}; }

}  // namespace

TEST(Render, SinglePeakValues) {
  const auto s = render_spectrum(fp({{500.0, 1.0}}), 2.0, 5000, false);
  EXPECT_DOUBLE_EQ(s.values[500], 1.0);
  EXPECT_NEAR(s.values[502], std::exp(-0.5), 1e-15);
  EXPECT_NEAR(s.values[498], std::exp(-0.5), 1e-15);
  EXPECT_EQ(s.values[0], 0.0);
}

TEST(Render, EmptyFingerprintIsAllZero) {
  const auto s = render_spectrum(fp({}), 2.0, 100);
  for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(Render, MatchesNaiveReference) {
  const std::vector<Peak> peaks{{10.3, 0.4}, {11.0, 1.0}, {70.75, 0.8}, {99.9, 0.2}};
  for (double width : {0.3, 2.0, 5.0, 40.0}) {
    const auto got = render_spectrum(fp(peaks), width, 100);
    const auto want = naive_render(peaks, width, 100, true);
    for (std::size_t i = 0; i < 100; ++i) ASSERT_NEAR(got.values[i], want[i], 1e-14) << "width " << width << " at " << i;
  }
}

TEST(Render, LinearInPeaksBeforeNormalization) {
  const Peak a{120.5, 0.7}, b{160.0, 1.0};
  const auto ab = render_spectrum(fp({a, b}), 3.0, 300, false);
  const auto sa = render_spectrum(fp({a}), 3.0, 300, false);
  const auto sb = render_spectrum(fp({b}), 3.0, 300, false);
  for (std::size_t i = 0; i < 300; ++i) ASSERT_NEAR(ab.values[i], sa.values[i] + sb.values[i], 1e-15);
}

TEST(Render, SymmetricAboutIntegerPeak) {
  const auto s = render_spectrum(fp({{250.0, 1.0}}), 4.0, 501, false);
  for (std::size_t k = 1; k <= 250; ++k) ASSERT_EQ(s.values[250 - k], s.values[250 + k]);
}

TEST(Render, NormalizedMaximumIsOne) {
  RandomStream r(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Peak> peaks;
    for (int k = 0; k < 5; ++k) peaks.push_back({r.uniform(0.0, 999.0), r.uniform(0.1, 1.0)});
    const auto s = render_spectrum(fp(peaks), r.uniform(2.0, 5.0), 1000);
    ASSERT_EQ(*std::max_element(s.values.begin(), s.values.end()), 1.0);
    for (double v : s.values) ASSERT_GE(v, 0.0);
  }
}

TEST(Render, RejectsBadInputs) {
  EXPECT_THROW(render_spectrum(fp({{5.0, 1.0}}), 0.0, 10), ParameterError);
  EXPECT_THROW(render_spectrum(fp({{5.0, 1.0}}), -1.0, 10), ParameterError);
  EXPECT_THROW(render_spectrum(fp({{10.0, 1.0}}), 2.0, 10), DomainError);
  EXPECT_THROW(render_spectrum(fp({{-0.5, 1.0}}), 2.0, 10), DomainError);
}

TEST(TrainingVariant, AlterationsStayInBounds) {
  const auto base = fp({{1000.0, 1.0}, {2500.0, 0.5}, {4000.0, 0.25}});
  const VariationConfig var;
  RandomStream r(99);
  double min_shift = 1e9, max_shift = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const auto v = sample_training_variant(base, var, r, 5000);
    ASSERT_GE(v.width, 2.0);
    ASSERT_LE(v.width, 5.0);
    ASSERT_EQ(v.fingerprint.peaks.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
      const double shift = v.fingerprint.peaks[k].position - base.peaks[k].position;
      ASSERT_LE(std::abs(shift), 50.0);
      const double ratio = v.fingerprint.peaks[k].intensity / base.peaks[k].intensity;
      ASSERT_GE(ratio, 0.95 - 1e-12);
      ASSERT_LE(ratio, 1.05 + 1e-12);
      min_shift = std::min(min_shift, shift);
      max_shift = std::max(max_shift, shift);
    }
  }
  // The range is actually explored, not just respected.
  EXPECT_LT(min_shift, -49.0);
  EXPECT_GT(max_shift, 49.0);
}

TEST(TrainingVariant, AdditiveModeAddsDelta) {
  const auto base = fp({{100.0, 0.5}});
  VariationConfig var;
  var.max_shift = 0.0;
  var.intensity_mode = IntensityMode::additive;
  RandomStream r(1);
  for (int i = 0; i < 1000; ++i) {
    const auto v = sample_training_variant(base, var, r, 200);
    ASSERT_NEAR(v.fingerprint.peaks[0].intensity, 0.5, 0.05 + 1e-12);
    ASSERT_EQ(v.fingerprint.peaks[0].position, 100.0);
  }
}

TEST(TrainingVariant, ShiftOffSpectrumIsDomainError) {
  VariationConfig var;
  var.max_shift = 50.0;
  RandomStream r(2);
  // A peak 1 point from the edge leaves the range on roughly half the draws.
  EXPECT_THROW(
      {
        for (int i = 0; i < 100; ++i) sample_training_variant(fp({{1.0, 1.0}}), var, r, 100);
      },
      DomainError);
}

TEST(TestGrid, NineVariantsInShiftMajorOrder) {
  const auto base = fp({{500.0, 1.0}, {800.0, 0.5}}, 3);
  const auto grid = build_test_grid(base, TestGridConfig{});
  const double shifts[] = {-25.0, 0.0, 25.0};
  const double scales[] = {0.98, 1.0, 1.02};
  for (std::size_t i = 0; i < kTestGridSize; ++i) {
    const auto& v = grid[i];
    EXPECT_EQ(v.width, 2.0);
    EXPECT_EQ(v.fingerprint.class_id, 3);
    EXPECT_DOUBLE_EQ(v.fingerprint.peaks[0].position, 500.0 + shifts[i / 3]);
    EXPECT_DOUBLE_EQ(v.fingerprint.peaks[1].position, 800.0 + shifts[i / 3]);
    EXPECT_DOUBLE_EQ(v.fingerprint.peaks[0].intensity, scales[i % 3]);
    EXPECT_DOUBLE_EQ(v.fingerprint.peaks[1].intensity, 0.5 * scales[i % 3]);
  }
  EXPECT_EQ(grid[kIdealGridIndex].fingerprint, base);
}

TEST(TestGrid, GlobalScaleCancelsUnderNormalization) {
  const auto base = fp({{500.0, 1.0}, {530.0, 0.6}});
  const auto grid = build_test_grid(base, TestGridConfig{});
  const auto ideal = render_spectrum(grid[kIdealGridIndex].fingerprint, 2.0, 1000);
  for (std::size_t k : {3u, 5u}) {
    const auto scaled = render_spectrum(grid[k].fingerprint, 2.0, 1000);
    for (std::size_t i = 0; i < 1000; ++i) ASSERT_NEAR(scaled.values[i], ideal.values[i], 1e-15);
  }
}

TEST(TestGrid, DegenerateGridRepeatsIdeal) {
  const auto base = fp({{50.0, 1.0}});
  TestGridConfig g{0.0, 0.0, 2.0};
  VariationConfig var;
  var.max_shift = 0.0;
  var.max_intensity_delta = 0.0;
  EXPECT_NO_THROW(g.validate_against(var));
  const auto grid = build_test_grid(base, g);
  for (const auto& v : grid) EXPECT_EQ(v.fingerprint, base);
}

TEST(TestGrid, MustBeWeakerThanTraining) {
  VariationConfig var;
  EXPECT_NO_THROW(TestGridConfig{}.validate_against(var));
  EXPECT_THROW((TestGridConfig{50.0, 0.02, 2.0}.validate_against(var)), ParameterError);
  EXPECT_THROW((TestGridConfig{25.0, 0.05, 2.0}.validate_against(var)), ParameterError);
  EXPECT_THROW((TestGridConfig{25.0, 0.02, 0.0}.validate()), ParameterError);
}

TEST(Fingerprint, ValidationCatchesEachInvariant) {
  EXPECT_NO_THROW(validate_fingerprint(fp({{60.0, 0.3}, {100.0, 1.0}}), 200, 50, 1, 5));
  EXPECT_THROW(validate_fingerprint(fp({{40.0, 1.0}}), 200, 50, 1, 5), DomainError);
  EXPECT_THROW(validate_fingerprint(fp({{150.0, 1.0}}), 200, 50, 1, 5), DomainError);
  EXPECT_THROW(validate_fingerprint(fp({{60.0, 0.5}}), 200, 50, 1, 5), DomainError);
  EXPECT_THROW(validate_fingerprint(fp({{100.0, 1.0}, {60.0, 0.5}}), 200, 50, 1, 5), DomainError);
  EXPECT_THROW(validate_fingerprint(fp({{60.0, 1.0}, {70.0, 1.0}}), 200, 50, 1, 1), DomainError);
  try {
    validate_fingerprint(fp({{10.0, 1.0}}, 42), 200, 50, 1, 5);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("class 42"), std::string::npos);
  }
}
