#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "synspec/error.hpp"
#include "synspec/parallel.hpp"

namespace synspec::nn {

/// Dense row-major tensor. Activations are (batch, channels, length) or
/// (batch, features).
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)), data(product(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != product(shape)) throw ShapeError("tensor data size does not match shape " + shape_string(shape));
  }

  static std::size_t product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  static std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
    return out + ")";
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t batch() const { return shape.at(0); }
  // Elements per batch entry.
  std::size_t stride0() const { return shape.empty() || shape[0] == 0 ? 0 : data.size() / shape[0]; }

  T* row(std::size_t b) { return data.data() + b * stride0(); }
  const T* row(std::size_t b) const { return data.data() + b * stride0(); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMajor<T>, 0, Eigen::OuterStride<>> view(const T* p, std::size_t rows, std::size_t cols,
                                                             std::size_t ld) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(ld))};
}

template <typename T>
Eigen::Map<RowMajor<T>, 0, Eigen::OuterStride<>> mutable_view(T* p, std::size_t rows, std::size_t cols,
                                                               std::size_t ld) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(ld))};
}

// Column chunk width for splitting a product across threads. Fixed, so each
// chunk is the same Eigen call (and the same summation order) whatever the
// thread count.
inline constexpr std::size_t kGemmChunk = 512;

}  // namespace detail

/// C (M x N) += op(A) (M x K) * op(B) (K x N), accumulated in T.
///
/// A and B are row-major with leading dimensions lda/ldb; `trans_a` /
/// `trans_b` select their transposes (so A is then stored K x M).
template <typename T>
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, bool trans_a,
                     const T* B, std::size_t ldb, bool trans_b, T* C, std::size_t ldc) {
  if (M == 0 || N == 0 || K == 0) return;
  const auto a = trans_a ? detail::view(A, K, M, lda) : detail::view(A, M, K, lda);
  const auto b = trans_b ? detail::view(B, N, K, ldb) : detail::view(B, K, N, ldb);
  const std::size_t chunks = (N + detail::kGemmChunk - 1) / detail::kGemmChunk;
  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t ch = begin; ch < end; ++ch) {
      const std::size_t j0 = ch * detail::kGemmChunk;
      const auto j = static_cast<Eigen::Index>(j0);
      const auto nj = static_cast<Eigen::Index>(std::min(detail::kGemmChunk, N - j0));
      auto c = detail::mutable_view(C + j0, M, static_cast<std::size_t>(nj), ldc);
      if (!trans_a && !trans_b) c.noalias() += a * b.middleCols(j, nj);
      else if (!trans_a) c.noalias() += a * b.middleRows(j, nj).transpose();
      else if (!trans_b) c.noalias() += a.transpose() * b.middleCols(j, nj);
      else c.noalias() += a.transpose() * b.middleRows(j, nj).transpose();
    }
  });
}

enum class Mode { train, eval };

// ---------------------------------------------------------------- conv1d --

/// Per sample b, a (ci * kernel + k, t) block holding input[b, ci, t * stride + k].
template <typename T>
std::vector<T> im2col(const Tensor<T>& input, std::size_t kernel, std::size_t stride, std::size_t out_len) {
  const std::size_t B = input.dim(0), Ci = input.dim(1), L = input.dim(2);
  std::vector<T> out(B * Ci * kernel * out_len);
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* src = input.data.data() + (b * Ci + ci) * L;
        for (std::size_t k = 0; k < kernel; ++k) {
          T* dst = out.data() + ((b * Ci + ci) * kernel + k) * out_len;
          for (std::size_t t = 0; t < out_len; ++t) dst[t] = src[t * stride + k];
        }
      }
    }
  });
  return out;
}

inline std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ShapeError("conv1d kernel and stride must be positive");
  if (kernel > length)
    throw ShapeError("conv1d kernel " + std::to_string(kernel) + " exceeds input length " + std::to_string(length));
  return (length - kernel) / stride + 1;
}

namespace detail {
// Samples per partial sum of the conv weight gradient. Fixed for the same
// reason as kGemmChunk.
inline constexpr std::size_t kConvGroup = 16;
}  // namespace detail

/// Valid cross-correlation. weights (out_ch, in_ch, kernel), bias (out_ch).
/// output[b, co, t] = bias[co] + sum_{ci,k} w[co, ci, k] * input[b, ci, t*stride + k]
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t stride,
                         std::vector<T>* cols_out = nullptr) {
  if (input.rank() != 3) throw ShapeError("conv1d expects (batch, channels, length) input");
  if (weights.rank() != 3 || weights.dim(1) != input.dim(1))
    throw ShapeError("conv1d weights " + Tensor<T>::shape_string(weights.shape) + " do not match input channels " +
                     std::to_string(input.dim(1)));
  const std::size_t B = input.dim(0), Co = weights.dim(0), Ci = weights.dim(1), K = weights.dim(2);
  if (bias.size() != Co) throw ShapeError("conv1d bias length must equal out channels");
  const std::size_t Lo = conv_output_length(input.dim(2), K, stride);
  std::vector<T> cols = im2col(input, K, stride, Lo);
  const std::size_t CK = Ci * K;
  Tensor<T> out({B, Co, Lo});
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      T* o = out.data.data() + b * Co * Lo;
      gemm_accumulate<T>(Co, Lo, CK, weights.data.data(), CK, false, cols.data() + b * CK * Lo, Lo, false, o, Lo);
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t t = 0; t < Lo; ++t) o[co * Lo + t] += bias.data[co];
    }
  });
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

/// Gradients of conv1d given the forward's im2col matrix.
template <typename T>
ConvGrads<T> conv1d_backward(const std::vector<T>& cols, const std::vector<std::size_t>& input_shape,
                             const Tensor<T>& weights, std::size_t stride, const Tensor<T>& grad_out) {
  const std::size_t B = input_shape.at(0), Ci = input_shape.at(1), L = input_shape.at(2);
  const std::size_t Co = weights.dim(0), K = weights.dim(2);
  const std::size_t Lo = grad_out.dim(2);
  const std::size_t CK = Ci * K;
  if (grad_out.dim(0) != B || grad_out.dim(1) != Co || cols.size() != B * CK * Lo)
    throw UsageError("conv1d backward: gradient or cache does not match the forward pass");

  ConvGrads<T> g{Tensor<T>(input_shape), Tensor<T>(weights.shape), Tensor<T>({Co})};
  const T* dy = grad_out.data.data();

  // Weight and bias gradients: partial sums over fixed sample groups, then
  // added in group order.
  const std::size_t groups = (B + detail::kConvGroup - 1) / detail::kConvGroup;
  std::vector<T> dw_part(groups * Co * CK, T(0));
  std::vector<T> db_part(groups * Co, T(0));
  parallel_for(groups, [&](std::size_t g0, std::size_t g1) {
    for (std::size_t gi = g0; gi < g1; ++gi) {
      T* dw = dw_part.data() + gi * Co * CK;
      T* db = db_part.data() + gi * Co;
      for (std::size_t b = gi * detail::kConvGroup; b < std::min(B, (gi + 1) * detail::kConvGroup); ++b) {
        const T* dyb = dy + b * Co * Lo;
        gemm_accumulate<T>(Co, CK, Lo, dyb, Lo, false, cols.data() + b * CK * Lo, Lo, true, dw, CK);
        for (std::size_t co = 0; co < Co; ++co) {
          T s = T(0);
          for (std::size_t t = 0; t < Lo; ++t) s += dyb[co * Lo + t];
          db[co] += s;
        }
      }
    }
  });
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t i = 0; i < Co * CK; ++i) g.weights.data[i] += dw_part[gi * Co * CK + i];
    for (std::size_t co = 0; co < Co; ++co) g.bias.data[co] += db_part[gi * Co + co];
  }

  // Input gradient: per-sample column gradient scattered back (col2im).
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    std::vector<T> dcols(CK * Lo);
    for (std::size_t b = b0; b < b1; ++b) {
      std::fill(dcols.begin(), dcols.end(), T(0));
      gemm_accumulate<T>(CK, Lo, Co, weights.data.data(), CK, true, dy + b * Co * Lo, Lo, false, dcols.data(), Lo);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        T* dst = g.input.data.data() + (b * Ci + ci) * L;
        for (std::size_t k = 0; k < K; ++k) {
          const T* src = dcols.data() + (ci * K + k) * Lo;
          for (std::size_t t = 0; t < Lo; ++t) dst[t * stride + k] += src[t];
        }
      }
    }
  });
  return g;
}

// ------------------------------------------------------------- maxpool1d --

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // absolute index into the input row per output element
};

/// Non-overlapping windows (stride = window); a trailing remainder shorter
/// than the window is dropped. Ties resolve to the lowest index.
template <typename T>
PoolResult<T> maxpool1d_forward(const Tensor<T>& input, std::size_t window) {
  if (window == 0) throw ShapeError("maxpool window must be >= 1");
  if (input.rank() != 3) throw ShapeError("maxpool1d expects (batch, channels, length) input");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  const std::size_t Lo = L / window;
  if (Lo == 0)
    throw ShapeError("maxpool window " + std::to_string(window) + " exceeds input length " + std::to_string(L));
  PoolResult<T> r{Tensor<T>({B, C, Lo}), std::vector<std::uint32_t>(B * C * Lo)};
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* src = input.data.data() + bc * L;
    T* dst = r.output.data.data() + bc * Lo;
    std::uint32_t* idx = r.argmax.data() + bc * Lo;
    for (std::size_t t = 0; t < Lo; ++t) {
      std::size_t best = t * window;
      for (std::size_t j = best + 1; j < (t + 1) * window; ++j)
        if (src[j] > src[best]) best = j;
      dst[t] = src[best];
      idx[t] = static_cast<std::uint32_t>(best);
    }
  }
  return r;
}

/// Routes each upstream value to the input element that won its window.
template <typename T>
Tensor<T> maxpool1d_backward(const std::vector<std::uint32_t>& argmax, const std::vector<std::size_t>& input_shape,
                             const Tensor<T>& grad_out) {
  const std::size_t L = input_shape.at(2);
  const std::size_t Lo = grad_out.dim(2);
  const std::size_t BC = input_shape.at(0) * input_shape.at(1);
  if (argmax.size() != BC * Lo) throw UsageError("maxpool backward: cache does not match the gradient");
  Tensor<T> dx(input_shape);
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t t = 0; t < Lo; ++t) dx.data[bc * L + argmax[bc * Lo + t]] += grad_out.data[bc * Lo + t];
  return dx;
}

// ------------------------------------------------------------- batchnorm --

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;
};

template <typename T>
struct BatchNormCache {
  std::vector<double> x_hat;    // normalized input, same layout as input
  std::vector<double> inv_std;  // per channel
};

namespace detail {
// (batch, channels, length) or (batch, features) with features as channels.
inline void bn_dims(const std::vector<std::size_t>& s, std::size_t& B, std::size_t& C, std::size_t& L) {
  if (s.size() == 3) {
    B = s[0], C = s[1], L = s[2];
  } else if (s.size() == 2) {
    B = s[0], C = s[1], L = 1;
  } else {
    throw ShapeError("batchnorm expects rank-2 or rank-3 input");
  }
}
}  // namespace detail

/// Per-channel normalization. Train mode uses the (biased) batch statistics
/// and folds them into the running stats with `momentum`; eval mode uses the
/// running stats.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const std::vector<T>& gamma, const std::vector<T>& beta,
                            BatchNormState<T>& state, Mode mode, BatchNormCache<T>* cache = nullptr) {
  std::size_t B, C, L;
  detail::bn_dims(input.shape, B, C, L);
  if (gamma.size() != C || beta.size() != C || state.running_mean.size() != C || state.running_var.size() != C)
    throw ShapeError("batchnorm parameters do not match " + std::to_string(C) + " channels");
  if (mode == Mode::train && B < 2) throw ShapeError("batchnorm in train mode needs a batch of at least 2");
  Tensor<T> out(input.shape);
  if (cache) {
    cache->x_hat.assign(input.size(), 0.0);
    cache->inv_std.assign(C, 0.0);
  }
  const double count = static_cast<double>(B * L);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l) s += static_cast<double>(input.data[(b * C + c) * L + l]);
      mean = s / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l) {
          const double d = static_cast<double>(input.data[(b * C + c) * L + l]) - mean;
          sq += d * d;
        }
      var = sq / count;
      state.running_mean[c] = static_cast<T>(state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean);
      state.running_var[c] = static_cast<T>(state.momentum * state.running_var[c] + (1.0 - state.momentum) * var);
    } else {
      mean = static_cast<double>(state.running_mean[c]);
      var = static_cast<double>(state.running_var[c]);
    }
    const double inv_std = 1.0 / std::sqrt(var + state.epsilon);
    const double g = static_cast<double>(gamma[c]), bt = static_cast<double>(beta[c]);
    if (cache) cache->inv_std[c] = inv_std;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * C + c) * L + l;
        const double xh = (static_cast<double>(input.data[i]) - mean) * inv_std;
        if (cache) cache->x_hat[i] = xh;
        out.data[i] = static_cast<T>(g * xh + bt);
      }
  }
  return out;
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// Full chain rule through the batch mean and variance:
/// dx = gamma * inv_std / N * (N dy - sum(dy) - x_hat * sum(dy * x_hat)).
template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const std::vector<T>& gamma,
                                     const Tensor<T>& grad_out) {
  std::size_t B, C, L;
  detail::bn_dims(grad_out.shape, B, C, L);
  if (cache.x_hat.size() != grad_out.size() || cache.inv_std.size() != C)
    throw UsageError("batchnorm backward: cache does not match the gradient");
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape), std::vector<T>(C), std::vector<T>(C)};
  const double n = static_cast<double>(B * L);
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * C + c) * L + l;
        const double dy = static_cast<double>(grad_out.data[i]);
        sum_dy += dy;
        sum_dy_xh += dy * cache.x_hat[i];
      }
    g.gamma[c] = static_cast<T>(sum_dy_xh);
    g.beta[c] = static_cast<T>(sum_dy);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c] / n;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * C + c) * L + l;
        const double dy = static_cast<double>(grad_out.data[i]);
        g.input.data[i] = static_cast<T>(scale * (n * dy - sum_dy - cache.x_hat[i] * sum_dy_xh));
      }
  }
  return g;
}

// ----------------------------------------------------------------- dense --

/// output[b, u] = bias[u] + sum_f input[b, f] * weights[f, u]; weights are
/// stored (in_features, units).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 2) throw ShapeError("dense expects (batch, features) input");
  if (weights.rank() != 2 || weights.dim(0) != input.dim(1))
    throw ShapeError("dense weights " + Tensor<T>::shape_string(weights.shape) + " do not match " +
                     std::to_string(input.dim(1)) + " input features");
  const std::size_t B = input.dim(0), F = weights.dim(0), U = weights.dim(1);
  if (bias.size() != U) throw ShapeError("dense bias length must equal units");
  Tensor<T> out({B, U});
  gemm_accumulate<T>(B, U, F, input.data.data(), F, false, weights.data.data(), U, false, out.data.data(), U);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t u = 0; u < U; ++u) out.data[b * U + u] += bias.data[u];
  return out;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out) {
  const std::size_t B = input.dim(0), F = weights.dim(0), U = weights.dim(1);
  if (grad_out.rank() != 2 || grad_out.dim(0) != B || grad_out.dim(1) != U)
    throw UsageError("dense backward: gradient does not match the forward pass");
  DenseGrads<T> g{Tensor<T>(input.shape), Tensor<T>(weights.shape), Tensor<T>({U})};
  gemm_accumulate<T>(F, U, B, input.data.data(), F, true, grad_out.data.data(), U, false, g.weights.data.data(), U);
  gemm_accumulate<T>(B, F, U, grad_out.data.data(), U, false, weights.data.data(), U, true, g.input.data.data(), F);
  for (std::size_t u = 0; u < U; ++u) {
    double s = 0.0;
    for (std::size_t b = 0; b < B; ++b) s += static_cast<double>(grad_out.data[b * U + u]);
    g.bias.data[u] = static_cast<T>(s);
  }
  return g;
}

// ------------------------------------------------------------ activations --

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
  return out;
}

/// Subgradient 0 at and below zero.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  if (input.size() != grad_out.size()) throw UsageError("relu backward: gradient does not match the forward pass");
  Tensor<T> dx(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) dx.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
  return dx;
}

/// Row-wise max-subtracted softmax.
template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects (batch, classes) input");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  Tensor<T> out(logits.shape);
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.row(b);
    const double m = static_cast<double>(*std::max_element(z, z + C));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(static_cast<double>(z[c]) - m);
    for (std::size_t c = 0; c < C; ++c) out.data[b * C + c] = static_cast<T>(std::exp(static_cast<double>(z[c]) - m) / s);
  }
  return out;
}

/// Vector-Jacobian product of softmax: dz = p * (dp - sum(dp * p)).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probabilities, const Tensor<T>& grad_out) {
  const std::size_t B = probabilities.dim(0), C = probabilities.dim(1);
  Tensor<T> dz(probabilities.shape);
  for (std::size_t b = 0; b < B; ++b) {
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c)
      dot += static_cast<double>(grad_out.data[b * C + c]) * static_cast<double>(probabilities.data[b * C + c]);
    for (std::size_t c = 0; c < C; ++c) {
      const double p = static_cast<double>(probabilities.data[b * C + c]);
      dz.data[b * C + c] = static_cast<T>(p * (static_cast<double>(grad_out.data[b * C + c]) - dot));
    }
  }
  return dz;
}

template <typename T>
struct LossResult {
  double loss = 0.0;     // mean over the batch
  Tensor<T> grad;        // d loss / d logits
};

/// Mean cross-entropy of softmax(logits) against integer labels, computed
/// with a max-subtracted log-sum-exp. Gradient is (softmax - one_hot) / batch.
template <typename T, typename Label>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const Label> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects (batch, classes) logits");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B) throw ShapeError("label count does not match batch size");
  LossResult<T> r{0.0, Tensor<T>(logits.shape)};
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto y = static_cast<std::int64_t>(labels[b]);
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
    const T* z = logits.row(b);
    const double m = static_cast<double>(*std::max_element(z, z + C));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(static_cast<double>(z[c]) - m);
    const double lse = m + std::log(s);
    total += lse - static_cast<double>(z[y]);
    for (std::size_t c = 0; c < C; ++c) {
      const double p = std::exp(static_cast<double>(z[c]) - lse);
      r.grad.data[b * C + c] = static_cast<T>((p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) / static_cast<double>(B));
    }
  }
  r.loss = B ? total / static_cast<double>(B) : 0.0;
  return r;
}

}  // namespace synspec::nn
