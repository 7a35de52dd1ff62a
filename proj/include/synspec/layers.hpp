#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "synspec/error.hpp"
#include "synspec/random.hpp"
#include "synspec/tensor.hpp"

namespace synspec::nn {

enum class LayerKind { conv1d, maxpool1d, batchnorm, relu, flatten, dense, softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// One entry of a declarative layer stack. Only the fields relevant to
/// `kind` are read: out_channels/kernel/stride (conv1d), window (maxpool1d),
/// units (dense).
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t window = 0;
  std::size_t units = 0;

  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride = 1) {
    return {LayerKind::conv1d, channels, kernel, stride, 0, 0};
  }
  static LayerSpec pool(std::size_t window) { return {LayerKind::maxpool1d, 0, 0, 1, window, 0}; }
  static LayerSpec batchnorm() { return {LayerKind::batchnorm}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, 0, 0, 1, 0, units}; }
  static LayerSpec softmax() { return {LayerKind::softmax}; }

  std::string describe() const {
    switch (kind) {
      case LayerKind::conv1d:
        return "conv1d(" + std::to_string(out_channels) + ", k=" + std::to_string(kernel) +
               (stride != 1 ? ", s=" + std::to_string(stride) : std::string()) + ")";
      case LayerKind::maxpool1d: return "maxpool1d(" + std::to_string(window) + ")";
      case LayerKind::dense: return "dense(" + std::to_string(units) + ")";
      default: return to_string(kind);
    }
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <typename T>
struct ParamSlot {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Per-sample activation shape: {channels, length} or {features}.
using SampleShape = std::vector<std::size_t>;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual SampleShape output_shape() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  /// Consumes the cache of the preceding train-mode forward.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<ParamSlot<T>> parameters() { return {}; }
  virtual std::vector<Tensor<T>*> buffers() { return {}; }
  virtual void initialize(RandomStream&) {}

 protected:
  void require_cache(bool present) const {
    if (!present)
      throw UsageError(std::string(to_string(kind())) + " backward called without a matching train-mode forward");
  }
};

namespace detail {

// Uniform He-style fan-in initialisation: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
template <typename T>
void he_uniform(Tensor<T>& w, std::size_t fan_in, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

template <typename T>
class Conv1dLayer final : public Layer<T> {
 public:
  Conv1dLayer(const SampleShape& in, const LayerSpec& s)
      : in_channels_(in.at(0)), stride_(s.stride), out_len_(conv_output_length(in.at(1), s.kernel, s.stride)),
        weights_({s.out_channels, in.at(0), s.kernel}), bias_({s.out_channels}),
        dweights_(weights_.shape), dbias_(bias_.shape) {}

  LayerKind kind() const override { return LayerKind::conv1d; }
  SampleShape output_shape() const override { return {weights_.dim(0), out_len_}; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (mode == Mode::train) {
      input_shape_ = input.shape;
      auto out = conv1d_forward(input, weights_, bias_, stride_, &cols_);
      cached_ = true;
      return out;
    }
    return conv1d_forward(input, weights_, bias_, stride_);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    auto g = conv1d_backward(cols_, input_shape_, weights_, stride_, grad_out);
    dweights_ = std::move(g.weights);
    dbias_ = std::move(g.bias);
    cols_.clear();
    cols_.shrink_to_fit();
    return std::move(g.input);
  }

  std::vector<ParamSlot<T>> parameters() override {
    return {{"weights", &weights_, &dweights_}, {"bias", &bias_, &dbias_}};
  }

  void initialize(RandomStream& rng) override {
    detail::he_uniform(weights_, in_channels_ * weights_.dim(2), rng);
    std::fill(bias_.data.begin(), bias_.data.end(), T(0));
  }

 private:
  std::size_t in_channels_;
  std::size_t stride_;
  std::size_t out_len_;
  Tensor<T> weights_, bias_, dweights_, dbias_;
  std::vector<T> cols_;
  std::vector<std::size_t> input_shape_;
  bool cached_ = false;
};

template <typename T>
class MaxPool1dLayer final : public Layer<T> {
 public:
  MaxPool1dLayer(const SampleShape& in, const LayerSpec& s) : window_(s.window), in_(in) {
    if (window_ == 0) throw ShapeError("maxpool window must be >= 1");
    if (in.at(1) / window_ == 0)
      throw ShapeError("maxpool window " + std::to_string(window_) + " exceeds input length " +
                       std::to_string(in.at(1)));
  }
  LayerKind kind() const override { return LayerKind::maxpool1d; }
  SampleShape output_shape() const override { return {in_.at(0), in_.at(1) / window_}; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    auto r = maxpool1d_forward(input, window_);
    if (mode == Mode::train) {
      argmax_ = std::move(r.argmax);
      input_shape_ = input.shape;
      cached_ = true;
    }
    return std::move(r.output);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    return maxpool1d_backward(argmax_, input_shape_, grad_out);
  }

 private:
  std::size_t window_;
  SampleShape in_;
  std::vector<std::uint32_t> argmax_;
  std::vector<std::size_t> input_shape_;
  bool cached_ = false;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  explicit BatchNormLayer(const SampleShape& in)
      : in_(in), gamma_({in.at(0)}, T(1)), beta_({in.at(0)}), dgamma_(gamma_.shape), dbeta_(beta_.shape),
        running_mean_({in.at(0)}), running_var_({in.at(0)}, T(1)) {}

  LayerKind kind() const override { return LayerKind::batchnorm; }
  SampleShape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    BatchNormState<T> st{std::move(running_mean_.data), std::move(running_var_.data)};
    Tensor<T> out;
    try {
      out = batchnorm_forward(input, gamma_.data, beta_.data, st, mode, mode == Mode::train ? &cache_ : nullptr);
    } catch (...) {
      running_mean_.data = std::move(st.running_mean);
      running_var_.data = std::move(st.running_var);
      throw;
    }
    running_mean_.data = std::move(st.running_mean);
    running_var_.data = std::move(st.running_var);
    if (mode == Mode::train) cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    auto g = batchnorm_backward(cache_, gamma_.data, grad_out);
    dgamma_.data = std::move(g.gamma);
    dbeta_.data = std::move(g.beta);
    return std::move(g.input);
  }

  std::vector<ParamSlot<T>> parameters() override {
    return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
  }
  std::vector<Tensor<T>*> buffers() override { return {&running_mean_, &running_var_}; }

  void initialize(RandomStream&) override {
    std::fill(gamma_.data.begin(), gamma_.data.end(), T(1));
    std::fill(beta_.data.begin(), beta_.data.end(), T(0));
    std::fill(running_mean_.data.begin(), running_mean_.data.end(), T(0));
    std::fill(running_var_.data.begin(), running_var_.data.end(), T(1));
  }

 private:
  SampleShape in_;
  Tensor<T> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
  BatchNormCache<T> cache_;
  bool cached_ = false;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  explicit ReluLayer(const SampleShape& in) : in_(in) {}
  LayerKind kind() const override { return LayerKind::relu; }
  SampleShape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (mode == Mode::train) {
      // Only the sign pattern is needed for backward.
      active_.resize(input.size());
      for (std::size_t i = 0; i < input.size(); ++i) active_[i] = input.data[i] > T(0);
      shape_ = input.shape;
      cached_ = true;
    }
    return relu_forward(input);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    if (grad_out.shape != shape_) throw UsageError("relu backward: gradient does not match the forward pass");
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] = active_[i] ? grad_out.data[i] : T(0);
    return dx;
  }

 private:
  SampleShape in_;
  std::vector<std::uint8_t> active_;
  std::vector<std::size_t> shape_;
  bool cached_ = false;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  explicit FlattenLayer(const SampleShape& in) : in_(in) {}
  LayerKind kind() const override { return LayerKind::flatten; }
  SampleShape output_shape() const override { return {Tensor<T>::product(in_)}; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (mode == Mode::train) {
      input_shape_ = input.shape;
      cached_ = true;
    }
    Tensor<T> out;
    out.shape = {input.dim(0), input.stride0()};
    out.data = input.data;
    return out;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    Tensor<T> dx;
    dx.shape = input_shape_;
    dx.data = grad_out.data;
    return dx;
  }

 private:
  SampleShape in_;
  std::vector<std::size_t> input_shape_;
  bool cached_ = false;
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(const SampleShape& in, const LayerSpec& s)
      : weights_({in.at(0), s.units}), bias_({s.units}), dweights_(weights_.shape), dbias_(bias_.shape) {
    if (in.size() != 1) throw ShapeError("dense layer needs flattened (features) input");
    if (s.units == 0) throw ShapeError("dense layer needs at least one unit");
  }
  LayerKind kind() const override { return LayerKind::dense; }
  SampleShape output_shape() const override { return {weights_.dim(1)}; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (mode == Mode::train) {
      input_ = input;
      cached_ = true;
    }
    return dense_forward(input, weights_, bias_);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    auto g = dense_backward(input_, weights_, grad_out);
    dweights_ = std::move(g.weights);
    dbias_ = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<ParamSlot<T>> parameters() override {
    return {{"weights", &weights_, &dweights_}, {"bias", &bias_, &dbias_}};
  }
  void initialize(RandomStream& rng) override {
    detail::he_uniform(weights_, weights_.dim(0), rng);
    std::fill(bias_.data.begin(), bias_.data.end(), T(0));
  }

 private:
  Tensor<T> weights_, bias_, dweights_, dbias_;
  Tensor<T> input_;
  bool cached_ = false;
};

template <typename T>
class SoftmaxLayer final : public Layer<T> {
 public:
  explicit SoftmaxLayer(const SampleShape& in) : in_(in) {
    if (in.size() != 1) throw ShapeError("softmax needs (features) input");
  }
  LayerKind kind() const override { return LayerKind::softmax; }
  SampleShape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    auto p = softmax_forward(input);
    if (mode == Mode::train) {
      probabilities_ = p;
      cached_ = true;
    }
    return p;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(cached_);
    cached_ = false;
    return softmax_backward(probabilities_, grad_out);
  }

 private:
  SampleShape in_;
  Tensor<T> probabilities_;
  bool cached_ = false;
};

/// Builds the layer for `spec` given the per-sample input shape.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const SampleShape& in) {
  const bool sequence = in.size() == 2;
  auto need_sequence = [&] {
    if (!sequence) throw ShapeError(spec.describe() + " needs (channels, length) input; place it before flatten");
  };
  switch (spec.kind) {
    case LayerKind::conv1d:
      need_sequence();
      if (spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0)
        throw ShapeError("conv1d needs positive channels, kernel and stride");
      return std::make_unique<Conv1dLayer<T>>(in, spec);
    case LayerKind::maxpool1d:
      need_sequence();
      return std::make_unique<MaxPool1dLayer<T>>(in, spec);
    case LayerKind::batchnorm: return std::make_unique<BatchNormLayer<T>>(in);
    case LayerKind::relu: return std::make_unique<ReluLayer<T>>(in);
    case LayerKind::flatten: return std::make_unique<FlattenLayer<T>>(in);
    case LayerKind::dense: return std::make_unique<DenseLayer<T>>(in, spec);
    case LayerKind::softmax: return std::make_unique<SoftmaxLayer<T>>(in);
  }
  throw ShapeError("unknown layer kind");
}

}  // namespace synspec::nn
