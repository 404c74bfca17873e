#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sgdvit/core/params.hpp"

namespace sgdvit {

/// SGD with classical momentum: v <- momentum * v + grad; p <- p - lr * v.
template <class T>
struct OptimizerState {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::vector<std::vector<T>> velocity;  // one per parameter, created on first step
};

/// Applies one update and clears the gradients. Throws if any parameter has
/// no gradient; callers that legitimately skip a parameter on some steps must
/// give it a zero gradient first (see fill_missing_grads).
template <class T>
void sgd_step(const ParamSet<T>& params, OptimizerState<T>& state) {
  if (state.momentum < 0.0 || state.momentum >= 1.0)
    throw ConfigError("sgd: momentum must lie in [0, 1)");
  const auto& entries = params.entries();
  for (const auto& e : entries)
    if (!e.tensor.has_grad()) throw Error("sgd_step: parameter '" + e.name + "' has no gradient");
  if (state.velocity.empty()) {
    for (const auto& e : entries) state.velocity.emplace_back(e.tensor.numel(), T(0));
  }
  if (state.velocity.size() != entries.size()) throw Error("sgd_step: optimizer state mismatch");
  const T lr = T(state.learning_rate), mu = T(state.momentum);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor<T> p = entries[k].tensor;
    auto& v = state.velocity[k];
    if (v.size() != p.numel())
      throw Error("sgd_step: velocity shape mismatch for '" + entries[k].name + "'");
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      d[i] -= lr * v[i];
    }
    p.clear_grad();
  }
}

/// Gives a zero gradient to every parameter the last backward pass did not
/// reach (the true derivative of the loss w.r.t. an unused parameter).
template <class T>
void fill_missing_grads(const ParamSet<T>& params) {
  for (const auto& e : params.entries()) {
    Tensor<T> p = e.tensor;
    if (!p.has_grad()) p.mutable_grad();
  }
}

/// Global L2 norm of all parameter gradients.
template <class T>
double grad_norm(const ParamSet<T>& params) {
  double s = 0;
  for (const auto& e : params.entries())
    for (T g : e.tensor.grad()) s += double(g) * double(g);
  return std::sqrt(s);
}

/// Rescales gradients so their global norm does not exceed `max_norm`.
template <class T>
void clip_grad_norm(const ParamSet<T>& params, double max_norm) {
  const double n = grad_norm(params);
  if (n <= max_norm || n == 0.0) return;
  const T f = T(max_norm / n);
  for (const auto& e : params.entries()) {
    Tensor<T> p = e.tensor;
    if (p.has_grad())
      for (auto& g : p.mutable_grad()) g *= f;
  }
}

/// Learning rate decayed geometrically (linear in log space) from `start` at
/// iteration 0 to `end` at iteration total-1.
inline double log_space_lr(double start, double end, std::size_t iteration, std::size_t total) {
  if (total <= 1) return start;
  const double t = double(iteration) / double(total - 1);
  return std::exp(std::log(start) + t * (std::log(end) - std::log(start)));
}

}  // namespace sgdvit
