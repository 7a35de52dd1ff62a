#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "synspec/dataset.hpp"
#include "synspec/error.hpp"

namespace synspec::npy {

static_assert(std::endian::native == std::endian::little, "NPY writer assumes a little-endian host");

template <typename T>
struct dtype;
template <>
struct dtype<float> {
  static constexpr std::string_view descr = "<f4";
};
template <>
struct dtype<double> {
  static constexpr std::string_view descr = "<f8";
};
template <>
struct dtype<std::int64_t> {
  static constexpr std::string_view descr = "<i8";
};

struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

inline std::string shape_literal(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

/// Version 1.0 header: magic, version, uint16 header length, then the dict
/// literal padded with spaces and a trailing newline to a 64-byte boundary.
inline std::string encode_header(std::string_view descr, const std::vector<std::size_t>& shape) {
  std::string dict = "{'descr': '" + std::string(descr) + "', 'fortran_order': False, 'shape': " +
                     shape_literal(shape) + ", }";
  const std::size_t prefix = 10;
  std::size_t total = prefix + dict.size() + 1;
  const std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xffff) throw FormatError("NPY header too long for format version 1.0");
  std::string out("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  return out + dict;
}

namespace detail {

inline std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return i;
}

// Minimal reader for the Python dict literal numpy writes.
inline Header parse_dict(std::string_view s) {
  Header h;
  bool have_descr = false, have_order = false, have_shape = false;
  std::size_t i = skip_space(s, 0);
  if (i >= s.size() || s[i] != '{') throw FormatError("NPY header is not a dict literal");
  ++i;
  for (;;) {
    i = skip_space(s, i);
    if (i < s.size() && s[i] == '}') break;
    if (i >= s.size() || (s[i] != '\'' && s[i] != '"')) throw FormatError("NPY header: expected a quoted key");
    const char q = s[i++];
    const auto kend = s.find(q, i);
    if (kend == std::string_view::npos) throw FormatError("NPY header: unterminated key");
    const std::string key(s.substr(i, kend - i));
    i = skip_space(s, kend + 1);
    if (i >= s.size() || s[i] != ':') throw FormatError("NPY header: expected ':' after key " + key);
    i = skip_space(s, i + 1);
    if (key == "descr") {
      if (i >= s.size() || (s[i] != '\'' && s[i] != '"')) throw FormatError("NPY header: descr must be a string");
      const char vq = s[i++];
      const auto vend = s.find(vq, i);
      if (vend == std::string_view::npos) throw FormatError("NPY header: unterminated descr");
      h.descr = std::string(s.substr(i, vend - i));
      i = vend + 1;
      have_descr = true;
    } else if (key == "fortran_order") {
      if (s.substr(i, 4) == "True") {
        h.fortran_order = true;
        i += 4;
      } else if (s.substr(i, 5) == "False") {
        h.fortran_order = false;
        i += 5;
      } else {
        throw FormatError("NPY header: fortran_order must be True or False");
      }
      have_order = true;
    } else if (key == "shape") {
      if (i >= s.size() || s[i] != '(') throw FormatError("NPY header: shape must be a tuple");
      const auto close = s.find(')', i);
      if (close == std::string_view::npos) throw FormatError("NPY header: unterminated shape");
      std::string_view body = s.substr(i + 1, close - i - 1);
      std::size_t k = 0;
      while (k < body.size()) {
        k = skip_space(body, k);
        if (k >= body.size()) break;
        std::size_t value = 0;
        std::size_t digits = 0;
        while (k < body.size() && body[k] >= '0' && body[k] <= '9') {
          value = value * 10 + static_cast<std::size_t>(body[k] - '0');
          ++k;
          ++digits;
        }
        if (digits == 0) throw FormatError("NPY header: bad shape tuple");
        h.shape.push_back(value);
        k = skip_space(body, k);
        if (k < body.size() && body[k] == ',') ++k;
      }
      i = close + 1;
      have_shape = true;
    } else {
      throw FormatError("NPY header: unexpected key " + key);
    }
    i = skip_space(s, i);
    if (i < s.size() && s[i] == ',') ++i;
  }
  if (!have_descr || !have_order || !have_shape) throw FormatError("NPY header lacks descr, fortran_order or shape");
  return h;
}

}  // namespace detail

inline Header read_header(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw FormatError("not an NPY file");
  const auto major = static_cast<unsigned char>(magic[6]);
  std::size_t len = 0;
  if (major == 1) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw FormatError("truncated NPY header");
    len = b[0] | (static_cast<std::size_t>(b[1]) << 8);
  } else if (major == 2 || major == 3) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated NPY header");
    len = b[0] | (static_cast<std::size_t>(b[1]) << 8) | (static_cast<std::size_t>(b[2]) << 16) |
          (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw FormatError("unsupported NPY version " + std::to_string(major));
  }
  std::string dict(len, '\0');
  if (!in.read(dict.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated NPY header");
  return detail::parse_dict(dict);
}

template <typename T>
void write(const std::string& path, const T* data, const std::vector<std::size_t>& shape) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::string header = encode_header(dtype<T>::descr, shape);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n) out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!out) throw Error("failed writing " + path);
}

template <typename T>
struct Array {
  std::vector<std::size_t> shape;
  std::vector<T> data;
};

template <typename T>
Array<T> read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const Header h = read_header(in);
  if (h.descr != dtype<T>::descr)
    throw FormatError(path + ": dtype " + h.descr + " where " + std::string(dtype<T>::descr) + " was expected");
  if (h.fortran_order) throw FormatError(path + ": Fortran-ordered arrays are not supported");
  Array<T> a;
  a.shape = h.shape;
  a.data.resize(h.count());
  if (!a.data.empty() &&
      !in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(T))))
    throw FormatError(path + ": truncated array data");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after array data");
  return a;
}

}  // namespace synspec::npy

namespace synspec {

/// Spectra as float32 (n_samples, n_datapoints), labels as int64 (n_samples,).
inline void save_arrays(const LabeledDataset& dataset, const std::string& x_path, const std::string& y_path) {
  if (dataset.spectra.size() != dataset.rows() * dataset.n_datapoints)
    throw ShapeError("spectra buffer does not match rows x n_datapoints");
  npy::write(x_path, dataset.spectra.data(), {dataset.rows(), dataset.n_datapoints});
  npy::write(y_path, dataset.labels.data(), {dataset.rows()});
}

inline LabeledDataset load_arrays(const std::string& x_path, const std::string& y_path,
                                  SplitRole role = SplitRole::train) {
  auto x = npy::read<float>(x_path);
  auto y = npy::read<std::int64_t>(y_path);
  if (x.shape.size() != 2) throw FormatError(x_path + ": expected a 2-D array, got shape " + npy::shape_literal(x.shape));
  if (y.shape.size() != 1)
    throw FormatError(y_path + ": expected a 1-D label array, got shape " + npy::shape_literal(y.shape));
  if (x.shape[0] != y.shape[0])
    throw FormatError(x_path + " has " + std::to_string(x.shape[0]) + " rows but " + y_path + " has " +
                      std::to_string(y.shape[0]) + " labels");
  LabeledDataset d;
  d.role = role;
  d.n_datapoints = x.shape[1];
  d.spectra = std::move(x.data);
  d.labels = std::move(y.data);
  return d;
}

/// Base names of the array files for one split: x_<name>.npy / y_<name>.npy.
inline const char* split_file_stem(SplitRole role) {
  switch (role) {
    case SplitRole::train:
      return "train";
    case SplitRole::validation:
      return "val";
    case SplitRole::test:
      return "test";
  }
  return "train";
}

inline std::vector<std::string> split_file_names() {
  std::vector<std::string> out;
  for (auto role : {SplitRole::train, SplitRole::validation, SplitRole::test}) {
    out.push_back(std::string("x_") + split_file_stem(role) + ".npy");
    out.push_back(std::string("y_") + split_file_stem(role) + ".npy");
  }
  return out;
}

/// Writes all six array files into `dir` (created if missing).
inline void save_splits(const DatasetSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const LabeledDataset* d : {&splits.train, &splits.validation, &splits.test}) {
    const std::string stem = split_file_stem(d->role);
    save_arrays(*d, (dir / ("x_" + stem + ".npy")).string(), (dir / ("y_" + stem + ".npy")).string());
  }
}

inline DatasetSplits load_splits(const std::filesystem::path& dir) {
  DatasetSplits s;
  auto one = [&](SplitRole role) {
    const std::string stem = split_file_stem(role);
    return load_arrays((dir / ("x_" + stem + ".npy")).string(), (dir / ("y_" + stem + ".npy")).string(), role);
  };
  s.train = one(SplitRole::train);
  s.validation = one(SplitRole::validation);
  s.test = one(SplitRole::test);
  if (s.validation.n_datapoints != s.train.n_datapoints || s.test.n_datapoints != s.train.n_datapoints)
    throw FormatError(dir.string() + ": splits have different spectrum lengths");
  return s;
}

}  // namespace synspec
