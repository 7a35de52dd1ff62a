#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "synspec/adam.hpp"
#include "synspec/error.hpp"
#include "synspec/layers.hpp"
#include "synspec/random.hpp"
#include "synspec/tensor.hpp"

namespace synspec::nn {

/// Parameter and buffer values of a model, in layer order.
template <typename T>
struct ModelState {
  std::vector<std::vector<T>> parameters;
  std::vector<std::vector<T>> buffers;
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Sequential stack of layers over (batch, channels, length) input.
template <typename T>
class Model {
 public:
  Model(std::vector<LayerSpec> specs, std::size_t in_channels, std::size_t in_length)
      : specs_(std::move(specs)), input_shape_{in_channels, in_length} {
    SampleShape shape = input_shape_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      if (s.kind == LayerKind::softmax && i + 1 != specs_.size())
        throw ShapeError("layer " + std::to_string(i) + ": softmax must be the final layer");
      try {
        layers_.push_back(make_layer<T>(s, shape));
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + " (" + s.describe() + "): " + e.what());
      }
      shape = layers_.back()->output_shape();
      if (Tensor<T>::product(shape) == 0)
        throw ShapeError("layer " + std::to_string(i) + " (" + s.describe() + ") produces an empty output");
      shapes_.push_back(shape);
    }
  }

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  const SampleShape& input_shape() const noexcept { return input_shape_; }
  /// Per-sample output shape of every layer.
  const std::vector<SampleShape>& layer_shapes() const noexcept { return shapes_; }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  std::size_t n_outputs() const { return shapes_.empty() ? Tensor<T>::product(input_shape_) : shapes_.back().at(0); }

  bool has_softmax_head() const { return !specs_.empty() && specs_.back().kind == LayerKind::softmax; }

  /// Abort with DomainError as soon as a layer produces NaN/Inf.
  void set_checked(bool on) noexcept { checked_ = on; }

  /// Fills every layer's parameters from per-layer child streams of `seed`.
  void initialize(std::uint64_t seed) {
    const RandomStream root = RandomStream(seed).split("init");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      RandomStream rng = root.split(i);
      layers_[i]->initialize(rng);
    }
  }

  /// Output of the full stack (probabilities when the head is softmax).
  Tensor<T> forward(const Tensor<T>& input, Mode mode) { return run(input, mode, layers_.size()); }

  /// Output before the terminal softmax, if any.
  Tensor<T> logits(const Tensor<T>& input, Mode mode) {
    return run(input, mode, has_softmax_head() ? layers_.size() - 1 : layers_.size());
  }

  /// Backpropagates d loss / d logits through every layer below the head.
  Tensor<T> backward_from_logits(const Tensor<T>& grad_logits) {
    Tensor<T> g = grad_logits;
    const std::size_t top = has_softmax_head() ? layers_.size() - 1 : layers_.size();
    for (std::size_t i = top; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }

  /// Train-mode forward, mean softmax cross-entropy, full backward. Gradients
  /// are left in the layers (see parameters()).
  template <typename Label>
  double loss_and_gradients(const Tensor<T>& input, std::span<const Label> labels) {
    const auto z = logits(input, Mode::train);
    auto r = softmax_cross_entropy(z, labels);
    backward_from_logits(r.grad);
    return r.loss;
  }

  template <typename Label>
  double loss(const Tensor<T>& input, std::span<const Label> labels, Mode mode) {
    return softmax_cross_entropy(logits(input, mode), labels).loss;
  }

  std::vector<ParamSlot<T>> parameters() {
    std::vector<ParamSlot<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (auto& p : layers_[i]->parameters()) {
        p.name = std::to_string(i) + "." + to_string(layers_[i]->kind()) + "." + p.name;
        out.push_back(p);
      }
    }
    return out;
  }

  std::vector<Tensor<T>*> buffers() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
      for (auto* b : l->buffers()) out.push_back(b);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.value->size();
    return n;
  }

  ModelState<T> state() {
    ModelState<T> s;
    for (auto& p : parameters()) s.parameters.push_back(p.value->data);
    for (auto* b : buffers()) s.buffers.push_back(b->data);
    return s;
  }

  void load_state(const ModelState<T>& s) {
    auto ps = parameters();
    auto bs = buffers();
    if (s.parameters.size() != ps.size() || s.buffers.size() != bs.size())
      throw ShapeError("model state does not match the architecture");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (s.parameters[i].size() != ps[i].value->size()) throw ShapeError("parameter " + ps[i].name + " size differs");
      ps[i].value->data = s.parameters[i];
    }
    for (std::size_t i = 0; i < bs.size(); ++i) {
      if (s.buffers[i].size() != bs[i]->size()) throw ShapeError("buffer size differs");
      bs[i]->data = s.buffers[i];
    }
  }

  /// Same architecture in another scalar type with converted values.
  template <typename U>
  Model<U> cast() {
    Model<U> out(specs_, input_shape_.at(0), input_shape_.at(1));
    auto src = state();
    ModelState<U> dst;
    for (auto& v : src.parameters) dst.parameters.emplace_back(v.begin(), v.end());
    for (auto& v : src.buffers) dst.buffers.emplace_back(v.begin(), v.end());
    out.load_state(dst);
    return out;
  }

 private:
  Tensor<T> run(const Tensor<T>& input, Mode mode, std::size_t count) {
    if (input.rank() != 3 || input.dim(1) != input_shape_[0] || input.dim(2) != input_shape_[1])
      throw ShapeError("model input " + Tensor<T>::shape_string(input.shape) + " does not match (batch, " +
                       std::to_string(input_shape_[0]) + ", " + std::to_string(input_shape_[1]) + ")");
    if (count == 0) return input;
    Tensor<T> x = layers_[0]->forward(input, mode);
    check(x, 0);
    for (std::size_t i = 1; i < count; ++i) {
      x = layers_[i]->forward(x, mode);
      check(x, i);
    }
    return x;
  }

  void check(const Tensor<T>& x, std::size_t i) const {
    if (checked_ && !x.all_finite())
      throw DomainError("non-finite activation after layer " + std::to_string(i) + " (" + specs_[i].describe() + ")");
  }

  std::vector<LayerSpec> specs_;
  SampleShape input_shape_;
  std::vector<SampleShape> shapes_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  bool checked_ = false;
};

// -------------------------------------------------------- gradient check --

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Hook applied to the analytic gradients before comparison (one call per
/// parameter tensor); lets tests inject a deliberately broken backward.
using GradientHook = std::function<void(const std::string& name, std::vector<double>& grad)>;

/// Compares backprop against central differences on every parameter:
/// max over parameters of |a - n| / max(|a|, |n|, 1e-8).
/// Runs in double; float models should be cast<double>() first.
template <typename Label>
GradientCheckResult gradient_check(Model<double>& model, const Tensor<double>& input, std::span<const Label> labels,
                                   double h = 1e-3, const GradientHook& hook = {}) {
  model.loss_and_gradients(input, labels);
  auto params = model.parameters();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    analytic.push_back(p.grad->data);
    if (hook) hook(p.name, analytic.back());
  }
  GradientCheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].value->data;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = model.loss(input, labels, Mode::train);
      values[k] = saved - h;
      const double down = model.loss(input, labels, Mode::train);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++r.checked;
      if (err > r.max_relative_error || r.worst_parameter.empty()) {
        r.max_relative_error = err;
        r.worst_parameter = params[pi].name;
        r.worst_index = k;
        r.analytic = a;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

// ------------------------------------------------------------ checkpoint --

// Checkpoint layout (little-endian):
//   char[8]  magic "SYNSPCK\0"
//   u32      format version (1)
//   u32      scalar size in bytes (4 or 8)
//   u32 + bytes  architecture text
//   u64      input channels, u64 input length
//   u32      layer count, then per layer: u32 kind, u64 out_channels, kernel, stride, window, units
//   u32      parameter tensor count, then per tensor: u64 n, n scalars
//   u32      buffer tensor count, then per tensor: u64 n, n scalars
//   u64      adam step, f64 learning rate, f64 beta1, beta2, epsilon
//   u32      moment tensor count, then m tensors (u64 n, n scalars), then v tensors
inline constexpr char kCheckpointMagic[8] = {'S', 'Y', 'N', 'S', 'P', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  std::string architecture;
  std::vector<LayerSpec> layers;
  std::size_t in_channels = 1;
  std::size_t in_length = 0;
  ModelState<T> state;
  AdamState<T> adam;
};

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  template <typename V>
  void put(V v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(V));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void put_vector(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}
  template <typename V>
  V get() {
    V v;
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof(V))) throw FormatError("truncated checkpoint");
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    if (!in_.read(s.data(), n)) throw FormatError("truncated checkpoint");
    return s;
  }
  template <typename T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 34)) throw FormatError("checkpoint tensor too large");
    std::vector<T> v(n);
    if (n && !in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T))))
      throw FormatError("truncated checkpoint");
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  detail::BinaryWriter w(out);
  out.write(kCheckpointMagic, 8);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(sizeof(T));
  w.put_string(ck.architecture);
  w.put<std::uint64_t>(ck.in_channels);
  w.put<std::uint64_t>(ck.in_length);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.layers.size()));
  for (const auto& l : ck.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.kind));
    w.put<std::uint64_t>(l.out_channels);
    w.put<std::uint64_t>(l.kernel);
    w.put<std::uint64_t>(l.stride);
    w.put<std::uint64_t>(l.window);
    w.put<std::uint64_t>(l.units);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.state.parameters.size()));
  for (const auto& p : ck.state.parameters) w.put_vector(p);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.state.buffers.size()));
  for (const auto& b : ck.state.buffers) w.put_vector(b);
  w.put<std::uint64_t>(ck.adam.t);
  w.put<double>(ck.adam.learning_rate);
  w.put<double>(ck.adam.beta1);
  w.put<double>(ck.adam.beta2);
  w.put<double>(ck.adam.epsilon);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.adam.m.size()));
  for (const auto& m : ck.adam.m) w.put_vector(m);
  for (const auto& v : ck.adam.v) w.put_vector(v);
  if (!out) throw Error("failed writing " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError(path + ": not a checkpoint");
  detail::BinaryReader r(in);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  if (r.get<std::uint32_t>() != sizeof(T)) throw FormatError(path + ": scalar size mismatch");
  Checkpoint<T> ck;
  ck.architecture = r.get_string();
  ck.in_channels = r.get<std::uint64_t>();
  ck.in_length = r.get<std::uint64_t>();
  const auto n_layers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.get<std::uint32_t>();
    if (kind > static_cast<std::uint32_t>(LayerKind::softmax)) throw FormatError(path + ": unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.out_channels = r.get<std::uint64_t>();
    l.kernel = r.get<std::uint64_t>();
    l.stride = r.get<std::uint64_t>();
    l.window = r.get<std::uint64_t>();
    l.units = r.get<std::uint64_t>();
    ck.layers.push_back(l);
  }
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) ck.state.parameters.push_back(r.get_vector<T>());
  const auto n_buffers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_buffers; ++i) ck.state.buffers.push_back(r.get_vector<T>());
  ck.adam.t = r.get<std::uint64_t>();
  ck.adam.learning_rate = r.get<double>();
  ck.adam.beta1 = r.get<double>();
  ck.adam.beta2 = r.get<double>();
  ck.adam.epsilon = r.get<double>();
  const auto n_moments = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_moments; ++i) ck.adam.m.push_back(r.get_vector<T>());
  for (std::uint32_t i = 0; i < n_moments; ++i) ck.adam.v.push_back(r.get_vector<T>());
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes");
  return ck;
}

}  // namespace synspec::nn
