#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "synspec/error.hpp"
#include "synspec/layers.hpp"
#include "synspec/model.hpp"

namespace synspec {

/// Declarative classifier description.
///
/// Grammar (tokens joined by '-', any item may carry an `xN` repetition):
///
///   C<ch>[k<kernel>][s<stride>]   1D convolution + ReLU   (bare "C" = C64k5)
///   MP<w>                         max pooling, window w   (bare "MP" = MP2)
///   BN                            batch normalization; directly after a C it
///                                 sits between the convolution and its ReLU
///   F                             flatten
///   D<units>                      hidden dense layer + ReLU
///   ( ... )xN                     group repetition
///
/// Example: "(C64k5-MP6)x2-F-D2000-D500". The classification head
/// (dense(n_classes) + softmax) is appended by build_model.
struct ArchitectureSpec {
  std::string name;
  std::string source_tag;
  std::string grammar;
  std::vector<nn::LayerSpec> layers;
  std::vector<std::size_t> dense_widths;
};

namespace detail {

struct RawToken {
  enum Kind { conv, pool, bn, flatten, dense } kind;
  std::size_t a = 0, b = 0, c = 1;
  std::size_t position = 0;
};

class GrammarParser {
 public:
  explicit GrammarParser(std::string_view text) : text_(text) {}

  std::vector<RawToken> parse() {
    auto out = sequence();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    if (out.empty()) fail("empty architecture");
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("architecture at char " + std::to_string(pos_), msg);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  std::optional<std::size_t> number() {
    std::size_t start = pos_, v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (v > 1'000'000) fail("number too large");
      ++pos_;
    }
    if (pos_ == start) return std::nullopt;
    return v;
  }

  std::vector<RawToken> sequence() {
    std::vector<RawToken> out;
    for (;;) {
      auto part = item();
      out.insert(out.end(), part.begin(), part.end());
      if (!peek('-')) break;
      ++pos_;
    }
    return out;
  }

  std::vector<RawToken> item() {
    skip_space();
    std::vector<RawToken> body;
    if (peek('(')) {
      ++pos_;
      body = sequence();
      if (!peek(')')) fail("expected ')'");
      ++pos_;
    } else {
      body.push_back(token());
    }
    if (pos_ < text_.size() && text_[pos_] == 'x') {
      ++pos_;
      const auto n = number();
      if (!n) fail("expected a repetition count after 'x'");
      if (*n == 0) fail("repetition count must be at least 1");
      std::vector<RawToken> rep;
      for (std::size_t i = 0; i < *n; ++i) rep.insert(rep.end(), body.begin(), body.end());
      return rep;
    }
    return body;
  }

  RawToken token() {
    skip_space();
    RawToken t{};
    t.position = pos_;
    auto rest = text_.substr(pos_);
    if (rest.starts_with("MP")) {
      pos_ += 2;
      t.kind = RawToken::pool;
      t.a = number().value_or(2);
      if (t.a == 0) fail("pool window must be positive");
    } else if (rest.starts_with("BN")) {
      pos_ += 2;
      t.kind = RawToken::bn;
    } else if (rest.starts_with("C")) {
      ++pos_;
      t.kind = RawToken::conv;
      t.a = number().value_or(64);
      t.b = 5;
      t.c = 1;
      if (pos_ < text_.size() && text_[pos_] == 'k') {
        ++pos_;
        auto k = number();
        if (!k) fail("expected kernel size after 'k'");
        t.b = *k;
      }
      if (pos_ < text_.size() && text_[pos_] == 's') {
        ++pos_;
        auto s = number();
        if (!s) fail("expected stride after 's'");
        t.c = *s;
      }
      if (t.a == 0 || t.b == 0 || t.c == 0) fail("convolution channels, kernel and stride must be positive");
    } else if (rest.starts_with("F")) {
      ++pos_;
      t.kind = RawToken::flatten;
    } else if (rest.starts_with("D")) {
      ++pos_;
      t.kind = RawToken::dense;
      auto u = number();
      if (!u) fail("expected unit count after 'D'");
      if (*u == 0) fail("dense layer needs at least one unit");
      t.a = *u;
    } else {
      fail(rest.empty() ? "unexpected end of input" : "unknown token starting with '" + std::string(1, rest[0]) + "'");
    }
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses and expands the grammar into a flat layer list (no head).
inline ArchitectureSpec parse_architecture(const std::string& grammar, const std::string& name = "",
                                           const std::string& source_tag = "") {
  const auto raw = detail::GrammarParser(grammar).parse();
  ArchitectureSpec spec{name, source_tag.empty() ? name : source_tag, grammar, {}, {}};
  bool flat = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& t = raw[i];
    auto where = [&] { return "architecture at char " + std::to_string(t.position); };
    switch (t.kind) {
      case detail::RawToken::conv:
        if (flat) throw ParseError(where(), "convolution after flatten");
        spec.layers.push_back(nn::LayerSpec::conv(t.a, t.b, t.c));
        if (i + 1 < raw.size() && raw[i + 1].kind == detail::RawToken::bn) {
          spec.layers.push_back(nn::LayerSpec::batchnorm());
          ++i;
        }
        spec.layers.push_back(nn::LayerSpec::relu());
        break;
      case detail::RawToken::pool:
        if (flat) throw ParseError(where(), "pooling after flatten");
        spec.layers.push_back(nn::LayerSpec::pool(t.a));
        break;
      case detail::RawToken::bn:
        spec.layers.push_back(nn::LayerSpec::batchnorm());
        break;
      case detail::RawToken::flatten:
        if (flat) throw ParseError(where(), "flatten applied twice");
        flat = true;
        spec.layers.push_back(nn::LayerSpec::flatten());
        break;
      case detail::RawToken::dense:
        if (!flat) throw ParseError(where(), "dense layer before flatten");
        spec.layers.push_back(nn::LayerSpec::dense(t.a));
        spec.layers.push_back(nn::LayerSpec::relu());
        spec.dense_widths.push_back(t.a);
        break;
    }
  }
  return spec;
}

/// Reads an architecture file: `key: value` lines (name, source, arch);
/// '#' starts a comment.
inline ArchitectureSpec parse_architecture_document(const std::string& document) {
  std::istringstream in(document);
  std::string line, name, source, grammar;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("line " + std::to_string(lineno), "expected 'key: value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    if (key == "name") {
      name = value;
    } else if (key == "source") {
      source = value;
    } else if (key == "arch") {
      grammar = value;
    } else {
      throw ParseError("line " + std::to_string(lineno), "unknown key '" + key + "'");
    }
  }
  if (grammar.empty()) throw ParseError("arch", "missing field");
  return parse_architecture(grammar, name, source);
}

inline ArchitectureSpec load_architecture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_architecture_document(ss.str());
}

inline std::string architecture_document(const ArchitectureSpec& spec) {
  return "name: " + spec.name + "\nsource: " + spec.source_tag + "\narch: " + spec.grammar + "\n";
}

// ---------------------------------------------------------------- registry --

enum class ModelScale { paper, desk };

struct BuiltinArchitecture {
  const char* key;
  const char* source_tag;
  const char* paper_grammar;  // for 5000-point spectra
  const char* desk_grammar;   // for 1000-point spectra
};

/// The plain-CNN family. Kernel and pool sizes are our own choices, picked so
/// the conv-output lengths land near the reference column at each scale.
inline constexpr BuiltinArchitecture kBuiltinArchitectures[] = {
    {"cnn2", "CNN2", "(C64k5-MP6)x2-F-D2000-D500", "(C64k5-MP6)x2-F-D2000-D500"},
    {"cnn3", "CNN3", "(C64k5-MP3)x2-C64k5-MP4-F-D2500-D1000", "(C64k5-MP3)x2-C64k5-MP4-F-D2500-D1000"},
    {"cnn6", "CNN6", "(C64k3-MP2)x6-F-D3100-D1200", "(C64k3-MP2)x6-F-D3100-D1200"},
    {"cnn_bn", "CNN BN", "(C64k3-BN-MP2)x3-F-D2048", "(C64k3-BN-MP2)x3-F-D2048"},
    {"vgg", "VGG", "C64k3-MP2-(C64k3-C64k3-MP2)x3-F-D120-D84-D186", "C64k3-MP2-(C64k3-C64k3-MP2)x3-F-D120-D84-D186"},
};

inline std::optional<ArchitectureSpec> builtin_architecture(std::string_view key, ModelScale scale = ModelScale::paper) {
  for (const auto& b : kBuiltinArchitectures) {
    if (key == b.key)
      return parse_architecture(scale == ModelScale::paper ? b.paper_grammar : b.desk_grammar, b.key, b.source_tag);
  }
  return std::nullopt;
}

// ------------------------------------------------------------ build_model --

struct ConvOutput {
  std::size_t positions = 0;
  std::size_t channels = 0;
  friend bool operator==(const ConvOutput&, const ConvOutput&) = default;
};

struct BuiltModel {
  ArchitectureSpec spec;
  nn::Model<float> model;
  ConvOutput conv_output;
  std::size_t n_classes = 0;
};

/// Full layer list: the spec's layers plus a dense(n_classes)+softmax head
/// unless the spec already ends in softmax.
inline std::vector<nn::LayerSpec> with_head(const ArchitectureSpec& spec, std::size_t n_classes) {
  auto layers = spec.layers;
  if (layers.empty() || layers.back().kind != nn::LayerKind::softmax) {
    if (layers.empty() || std::none_of(layers.begin(), layers.end(),
                                       [](const auto& l) { return l.kind == nn::LayerKind::flatten; }))
      layers.push_back(nn::LayerSpec::flatten());
    layers.push_back(nn::LayerSpec::dense(n_classes));
    layers.push_back(nn::LayerSpec::softmax());
  }
  return layers;
}

/// Positions x channels entering the first flatten (0x0 when there is none).
template <typename T>
ConvOutput conv_output_of(const nn::Model<T>& model) {
  const auto& specs = model.specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == nn::LayerKind::flatten) {
      const auto& s = i == 0 ? model.input_shape() : model.layer_shapes()[i - 1];
      return {s.at(1), s.at(0)};
    }
  }
  return {};
}

inline BuiltModel build_model(const ArchitectureSpec& spec, std::size_t n_datapoints, std::size_t n_classes,
                              std::uint64_t seed) {
  if (n_classes == 0) throw ShapeError("n_classes must be >= 1");
  nn::Model<float> model(with_head(spec, n_classes), 1, n_datapoints);
  model.initialize(seed);
  const ConvOutput co = conv_output_of(model);
  return BuiltModel{spec, std::move(model), co, n_classes};
}

}  // namespace synspec
