#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "synspec/error.hpp"

namespace synspec::nn {

/// Moment estimates for a list of parameter tensors plus the shared step
/// counter and hyperparameters. `learning_rate` is changed by the schedule.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  template <typename Sizes>
  void reset(const Sizes& sizes) {
    m.clear();
    v.clear();
    for (std::size_t n : sizes) {
      m.emplace_back(n, T(0));
      v.emplace_back(n, T(0));
    }
    t = 0;
  }
};

/// One Adam update over all tensors; the step counter is incremented first.
///   m <- b1 m + (1 - b1) g
///   v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  ++state.t;
  const double t = static_cast<double>(state.t);
  // Bias corrections are folded into two scalars; the element loop runs in T.
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T one_b1 = static_cast<T>(1.0 - state.beta1), one_b2 = static_cast<T>(1.0 - state.beta2);
  const T step_size = static_cast<T>(state.learning_rate / (1.0 - std::pow(state.beta1, t)));
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(1.0 - std::pow(state.beta2, t)));
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (p.size() != g.size() || p.size() != m.size()) throw ShapeError("adam_step: tensor sizes differ");
    T* __restrict pp = p.data();
    const T* __restrict gp = g.data();
    T* __restrict mp = m.data();
    T* __restrict vp = v.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T gk = gp[k];
      mp[k] = b1 * mp[k] + one_b1 * gk;
      vp[k] = b2 * vp[k] + one_b2 * gk * gk;
      pp[k] -= step_size * mp[k] / (std::sqrt(vp[k]) * inv_sqrt_c2 + eps);
    }
  }
}

}  // namespace synspec::nn
