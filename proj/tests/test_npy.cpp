#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "synspec/npy.hpp"
#include "temp_dir.hpp"

using namespace synspec;

TEST(NpyHeader, MatrixHeaderBytes) {
  const std::string h = npy::encode_header("<f4", {2, 4});
  ASSERT_EQ(h.size(), 128u);  // 10 + 59-char dict + newline rounds up to 128
  EXPECT_EQ(h.substr(0, 6), "\x93NUMPY");
  EXPECT_EQ(h[6], '\x01');
  EXPECT_EQ(h[7], '\x00');
  EXPECT_EQ(static_cast<unsigned char>(h[8]), 118u);
  EXPECT_EQ(h[9], '\x00');
  const std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 4), }";
  EXPECT_EQ(h.substr(10, dict.size()), dict);
  EXPECT_EQ(h.back(), '\n');
  for (std::size_t i = 10 + dict.size(); i + 1 < h.size(); ++i) EXPECT_EQ(h[i], ' ');
}

TEST(NpyHeader, AlignedForManyShapes) {
  for (std::size_t rows : {0u, 1u, 9u, 30000u, 123456789u})
    for (const char* d : {"<f4", "<i8"}) {
      const auto h1 = npy::encode_header(d, {rows});
      const auto h2 = npy::encode_header(d, {rows, 5000});
      EXPECT_EQ(h1.size() % 64, 0u);
      EXPECT_EQ(h2.size() % 64, 0u);
    }
  EXPECT_EQ(npy::shape_literal({7}), "(7,)");
  EXPECT_EQ(npy::shape_literal({}), "()");
}

TEST(Npy, RoundTripIsBitExact) {
  TempDir dir;
  std::vector<float> x{0.0f, -0.0f, 1.0f, std::numeric_limits<float>::denorm_min(), 3.14159274f,
                       std::numeric_limits<float>::max(), 1e-30f, 0.5f};
  npy::write(dir / "x.npy", x.data(), {2, 4});
  const auto back = npy::read<float>(dir / "x.npy");
  EXPECT_EQ(back.shape, (std::vector<std::size_t>{2, 4}));
  ASSERT_EQ(back.data.size(), x.size());
  EXPECT_EQ(std::memcmp(back.data.data(), x.data(), x.size() * sizeof(float)), 0);
  const auto bytes = slurp(dir.path() / "x.npy");
  EXPECT_EQ(bytes.size(), 128u + 8u * 4u);
}

TEST(Npy, ZeroRowFile) {
  TempDir dir;
  LabeledDataset d;
  d.n_datapoints = 5000;
  save_arrays(d, dir / "x.npy", dir / "y.npy");
  const auto back = load_arrays(dir / "x.npy", dir / "y.npy");
  EXPECT_EQ(back.rows(), 0u);
  EXPECT_EQ(back.n_datapoints, 5000u);
  EXPECT_EQ(slurp(dir.path() / "x.npy").size(), 128u);
}

TEST(Npy, RejectsColumnVectorLabels) {
  TempDir dir;
  std::vector<float> x(6, 0.0f);
  std::vector<std::int64_t> y{0, 1, 2};
  npy::write(dir / "x.npy", x.data(), {3, 2});
  npy::write(dir / "y.npy", y.data(), {3, 1});
  EXPECT_THROW(load_arrays(dir / "x.npy", dir / "y.npy"), FormatError);
}

TEST(Npy, RejectsWrongDtypeTruncationAndMismatch) {
  TempDir dir;
  std::vector<double> xd(6, 0.0);
  std::vector<float> x(6, 0.0f);
  std::vector<std::int64_t> y{0, 1, 2}, y2{0, 1};
  npy::write(dir / "xd.npy", xd.data(), {3, 2});
  npy::write(dir / "x.npy", x.data(), {3, 2});
  npy::write(dir / "y.npy", y.data(), {3});
  npy::write(dir / "y2.npy", y2.data(), {2});
  EXPECT_THROW(load_arrays(dir / "xd.npy", dir / "y.npy"), FormatError);
  EXPECT_THROW(load_arrays(dir / "x.npy", dir / "y2.npy"), FormatError);
  auto bytes = slurp(dir.path() / "x.npy");
  spit(dir.path() / "t.npy", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(npy::read<float>(dir / "t.npy"), FormatError);
  spit(dir.path() / "junk.npy", "not an array");
  EXPECT_THROW(npy::read<float>(dir / "junk.npy"), FormatError);
}

TEST(Npy, ReadsForeignHeaderSpacing) {
  // Another writer may use double quotes and different spacing.
  TempDir dir;
  std::string dict = "{\"descr\":\"<i8\",\"shape\":(2,),\"fortran_order\":False}";
  dict.resize(128 - 10 - 1, ' ');
  dict.push_back('\n');
  std::string file("\x93NUMPY\x01\x00", 8);
  file.push_back(static_cast<char>(dict.size()));
  file.push_back('\0');
  file += dict;
  const std::int64_t vals[2] = {7, -1};
  file.append(reinterpret_cast<const char*>(vals), sizeof(vals));
  spit(dir.path() / "y.npy", file);
  const auto a = npy::read<std::int64_t>(dir / "y.npy");
  EXPECT_EQ(a.shape, std::vector<std::size_t>{2});
  EXPECT_EQ(a.data, (std::vector<std::int64_t>{7, -1}));
}

TEST(Npy, SplitsRoundTrip) {
  TempDir dir;
  DatasetSplits s;
  auto fill = [](LabeledDataset& d, SplitRole role, std::size_t rows) {
    d.role = role;
    d.n_datapoints = 3;
    for (std::size_t i = 0; i < rows; ++i) {
      d.labels.push_back(static_cast<std::int64_t>(i % 2));
      for (int k = 0; k < 3; ++k) d.spectra.push_back(static_cast<float>(i) + 0.25f * static_cast<float>(k));
    }
  };
  fill(s.train, SplitRole::train, 5);
  fill(s.validation, SplitRole::validation, 2);
  fill(s.test, SplitRole::test, 4);
  save_splits(s, dir.path() / "data");
  for (const auto& name : split_file_names()) EXPECT_TRUE(std::filesystem::exists(dir.path() / "data" / name)) << name;
  const auto back = load_splits(dir.path() / "data");
  EXPECT_EQ(back.train.spectra, s.train.spectra);
  EXPECT_EQ(back.validation.labels, s.validation.labels);
  EXPECT_EQ(back.test.spectra, s.test.spectra);
  EXPECT_EQ(back.test.role, SplitRole::test);
}
