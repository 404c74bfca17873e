#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sgdvit/core/flops.hpp"
#include "sgdvit/core/tape.hpp"
#include "sgdvit/core/tensor.hpp"

/// Differentiable tensor ops. Every op computes its forward value eagerly and,
/// when a tape is active and an input requires a gradient, records a node whose
/// closure accumulates input gradients from the output gradient.
namespace sgdvit::ops {

namespace detail {

using sgdvit::detail::ImplPtr;

template <class T, class Fn>
void record(const char* kind, const Tensor<T>& out, std::vector<ImplPtr<T>> inputs, Fn&& fn) {
  GradTape<T>::active()->record(kind, std::move(inputs), out.impl(), std::forward<Fn>(fn));
}

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Output shape and per-element source offsets for a broadcast binary op.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_idx, b_idx;
  bool trivial = false;
};

inline BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.trivial = true;
    return p;
  }
  const std::size_t r = std::max(a.rank(), b.rank());
  std::vector<std::size_t> ad(r, 1), bd(r, 1), od(r, 1);
  std::copy(a.dims().begin(), a.dims().end(), ad.begin() + (r - a.rank()));
  std::copy(b.dims().begin(), b.dims().end(), bd.begin() + (r - b.rank()));
  for (std::size_t i = 0; i < r; ++i) {
    if (ad[i] != bd[i] && ad[i] != 1 && bd[i] != 1) shape_mismatch(op, a, b);
    od[i] = std::max(ad[i], bd[i]);
  }
  p.out = Shape(od);
  const std::size_t n = p.out.numel();
  p.a_idx.resize(n);
  p.b_idx.resize(n);
  const auto as = Shape(ad).strides(), bs = Shape(bd).strides();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (ad[i] != 1) ia += idx[i] * as[i];
      if (bd[i] != 1) ib += idx[i] * bs[i];
    }
    p.a_idx[k] = ia;
    p.b_idx[k] = ib;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < od[i]) break;
      idx[i] = 0;
    }
  }
  return p;
}

// Splits a shape around `axis` into (outer, extent, inner).
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& n,
                       std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  n = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];
}

enum class BinaryKind { Add, Sub, Mul, Div };

template <class T>
Tensor<T> binary(const char* name, BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  auto plan = plan_broadcast(name, a.shape(), b.shape());
  Tensor<T> out(plan.out);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t n = out.numel();
  for (std::size_t k = 0; k < n; ++k) {
    const T u = x[plan.trivial ? k : plan.a_idx[k]];
    const T v = y[plan.trivial ? k : plan.b_idx[k]];
    switch (kind) {
      case BinaryKind::Add: o[k] = u + v; break;
      case BinaryKind::Sub: o[k] = u - v; break;
      case BinaryKind::Mul: o[k] = u * v; break;
      case BinaryKind::Div: o[k] = u / v; break;
    }
  }
  if (GradTape<T>::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    record(name, out, {ai, bi}, [ai, bi, kind, plan = std::move(plan)](std::span<const T> g) {
      auto* ga = grad_target(ai);
      auto* gb = grad_target(bi);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const std::size_t ia = plan.trivial ? k : plan.a_idx[k];
        const std::size_t ib = plan.trivial ? k : plan.b_idx[k];
        switch (kind) {
          case BinaryKind::Add:
            if (ga) (*ga)[ia] += g[k];
            if (gb) (*gb)[ib] += g[k];
            break;
          case BinaryKind::Sub:
            if (ga) (*ga)[ia] += g[k];
            if (gb) (*gb)[ib] -= g[k];
            break;
          case BinaryKind::Mul:
            if (ga) (*ga)[ia] += g[k] * bi->data[ib];
            if (gb) (*gb)[ib] += g[k] * ai->data[ia];
            break;
          case BinaryKind::Div: {
            const T inv = T(1) / bi->data[ib];
            if (ga) (*ga)[ia] += g[k] * inv;
            if (gb) (*gb)[ib] -= g[k] * ai->data[ia] * inv * inv;
            break;
          }
        }
      }
    });
  }
  return out;
}

// Elementwise map; `deriv(x, y)` returns dy/dx given input and output values.
template <class T, class F, class D>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, D deriv) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    auto oi = out.impl();
    std::weak_ptr<sgdvit::detail::TensorImpl<T>> ow = oi;
    record(name, out, {xi}, [xi, ow, deriv](std::span<const T> g) {
      auto* gx = grad_target(xi);
      if (!gx) return;
      auto op = ow.lock();
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * deriv(xi->data[i], op->data[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (numpy-style broadcasting)

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary("add", detail::BinaryKind::Add, a, b);
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary("sub", detail::BinaryKind::Sub, a, b);
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary("mul", detail::BinaryKind::Mul, a, b);
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary("div", detail::BinaryKind::Div, a, b);
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(
      "scale", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(
      "add_scalar", x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

/// log(1 + e^x), evaluated without overflow.
template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary(
      "softplus", x,
      [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

/// Clamps into [lo, hi]; the gradient is zero outside the interval.
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) detail::shape_mismatch("minimum", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::min(a[i], b[i]);
  if (GradTape<T>::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("minimum", out, {ai, bi}, [ai, bi](std::span<const T> g) {
      auto* ga = grad_target(ai);
      auto* gb = grad_target(bi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        // ties route the gradient to the first argument
        if (ai->data[i] <= bi->data[i]) {
          if (ga) (*ga)[i] += g[i];
        } else if (gb) {
          (*gb)[i] += g[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// (m x k) . (k x n) -> (m x n). `kind` names the FLOP counter bucket.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, const char* kind = "matmul") {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    detail::shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out(Shape{m, n});
  using detail::CMapMat;
  using detail::MapMat;
  MapMat<T>(out.data().data(), m, n).noalias() =
      CMapMat<T>(a.data().data(), m, k) * CMapMat<T>(b.data().data(), k, n);
  if (FlopScope::counting()) FlopScope::charge(kind, std::uint64_t(m) * k * n);
  if (GradTape<T>::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record(kind, out, {ai, bi}, [ai, bi, m, k, n](std::span<const T> g) {
      CMapMat<T> G(g.data(), m, n);
      if (auto* ga = grad_target(ai))
        MapMat<T>(ga->data(), m, k).noalias() += G * CMapMat<T>(bi->data.data(), k, n).transpose();
      if (auto* gb = grad_target(bi))
        MapMat<T>(gb->data(), k, n).noalias() += CMapMat<T>(ai->data.data(), m, k).transpose() * G;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index manipulation

/// Reads `source.flat[index[i]]` into element i of a tensor of shape `shape`.
/// The backward pass scatter-adds, so repeated indices are allowed.
template <class T>
Tensor<T> gather(const Tensor<T>& source, std::vector<std::size_t> index, Shape shape,
                 const char* kind = "gather") {
  if (index.size() != shape.numel())
    throw ShapeError(std::string(kind) + ": " + std::to_string(index.size()) +
                     " indices for output shape " + shape.str());
  Tensor<T> out(std::move(shape));
  auto src = source.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= src.size())
      throw ShapeError(std::string(kind) + ": index " + std::to_string(index[i]) +
                       " out of range for shape " + source.shape().str());
    out[i] = src[index[i]];
  }
  if (GradTape<T>::should_record({&source})) {
    auto si = source.impl();
    detail::record(kind, out, {si}, [si, index = std::move(index)](std::span<const T> g) {
      if (auto* gs = grad_target(si))
        for (std::size_t i = 0; i < g.size(); ++i) (*gs)[index[i]] += g[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) detail::shape_mismatch("reshape", x.shape(), shape);
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    detail::record("reshape", out, {xi}, [xi](std::span<const T> g) {
      if (auto* gx = grad_target(xi))
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    });
  }
  return out;
}

/// General axis permutation: output axis i is input axis perm[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch for " + x.shape().str());
  std::vector<std::size_t> od(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw ShapeError("permute: invalid permutation");
    seen[perm[i]] = true;
    od[i] = x.dim(perm[i]);
  }
  Shape os(od);
  const auto xs = x.shape().strides();
  std::vector<std::size_t> index(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * xs[perm[i]];
    index[k] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < od[i]) break;
      idx[i] = 0;
    }
  }
  return gather(x, std::move(index), std::move(os), "permute");
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + x.shape().str());
  return permute(x, {1, 0});
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                     " invalid for shape " + x.shape().str());
  std::size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  auto dims = x.shape().dims();
  dims[axis] = length;
  std::vector<std::size_t> index;
  index.reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = start; j < start + length; ++j)
      for (std::size_t i = 0; i < inner; ++i) index.push_back((o * n + j) * inner + i);
  return gather(x, std::move(index), Shape(dims), "slice");
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.rank()) throw ShapeError("concat: axis out of range for " + first.str());
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) detail::shape_mismatch("concat", first, p.shape());
    for (std::size_t i = 0; i < first.rank(); ++i)
      if (i != axis && p.dim(i) != first[i]) detail::shape_mismatch("concat", first, p.shape());
    total += p.dim(axis);
  }
  auto dims = first.dims();
  dims[axis] = total;
  Tensor<T> out{Shape(dims)};
  std::size_t outer, n, inner;
  detail::axis_split(out.shape(), axis, outer, n, inner);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t pn = p.dim(axis);
    auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + o * pn * inner, pn * inner,
                  out.data().begin() + (o * n + offset) * inner);
    offset += pn;
  }
  if (GradTape<T>::should_record(parts)) {
    std::vector<sgdvit::detail::ImplPtr<T>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    detail::record("concat", out, impls, [impls, offsets, outer, n, inner](std::span<const T> g) {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        auto* gp = grad_target(impls[k]);
        if (!gp) continue;
        const std::size_t pn = impls[k]->data.size() / (outer * inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < pn * inner; ++j)
            (*gp)[o * pn * inner + j] += g[(o * n + offsets[k]) * inner + j];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  auto plan = detail::plan_broadcast("broadcast_to", x.shape(), shape);
  if (!(plan.out == shape)) detail::shape_mismatch("broadcast_to", x.shape(), shape);
  if (plan.trivial) return reshape(x, shape);
  return gather(x, std::move(plan.a_idx), shape, "broadcast");
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    detail::record("sum", out, {xi}, [xi](std::span<const T> g) {
      if (auto* gx = grad_target(xi))
        for (auto& v : *gx) v += g[0];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Sum over one axis; the axis is removed (rank-1 inputs give shape [1]).
template <class T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("sum: axis out of range for " + x.shape().str());
  std::size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  auto dims = x.shape().dims();
  dims.erase(dims.begin() + axis);
  if (dims.empty()) dims.push_back(1);
  Tensor<T> out{Shape(dims)};
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * n + j) * inner + i];
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    detail::record("sum_axis", out, {xi}, [xi, outer, n, inner](std::span<const T> g) {
      if (auto* gx = grad_target(xi))
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < inner; ++i) (*gx)[(o * n + j) * inner + i] += g[o * inner + i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  return scale(sum(x, axis), T(1) / static_cast<T>(x.dim(axis)));
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax over the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = x.dim(x.rank() - 1);
  const std::size_t rows = x.numel() / n;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T* o = out.data().data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T z = 0;
    for (std::size_t i = 0; i < n; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    std::weak_ptr<sgdvit::detail::TensorImpl<T>> ow = out.impl();
    detail::record("softmax", out, {xi}, [xi, ow, n, rows](std::span<const T> g) {
      auto* gx = grad_target(xi);
      if (!gx) return;
      auto op = ow.lock();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = op->data.data() + r * n;
        const T* gr = g.data() + r * n;
        T dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += gr[i] * y[i];
        for (std::size_t i = 0; i < n; ++i) (*gx)[r * n + i] += y[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

/// Per-row layer normalization over the last axis with affine gamma/beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t n = x.dim(x.rank() - 1);
  if (gamma.numel() != n || beta.numel() != n)
    detail::shape_mismatch("layer_norm", x.shape(), gamma.shape());
  const std::size_t rows = x.numel() / n;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += in[i];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (in[i] - mu) * is;
      out[r * n + i] = xhat[r * n + i] * gamma[i] + beta[i];
    }
  }
  if (GradTape<T>::should_record({&x, &gamma, &beta})) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    detail::record("layer_norm", out, {xi, gi, bi},
                   [xi, gi, bi, n, rows, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](std::span<const T> g) {
                     auto* gx = grad_target(xi);
                     auto* gg = grad_target(gi);
                     auto* gb = grad_target(bi);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* gr = g.data() + r * n;
                       const T* xh = xhat.data() + r * n;
                       T s1 = 0, s2 = 0;
                       for (std::size_t i = 0; i < n; ++i) {
                         const T dxh = gr[i] * gi->data[i];
                         s1 += dxh;
                         s2 += dxh * xh[i];
                         if (gg) (*gg)[i] += gr[i] * xh[i];
                         if (gb) (*gb)[i] += gr[i];
                       }
                       if (!gx) continue;
                       const T inv_n = T(1) / static_cast<T>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const T dxh = gr[i] * gi->data[i];
                         (*gx)[r * n + i] += inv_std[r] * (dxh - inv_n * s1 - xh[i] * inv_n * s2);
                       }
                     }
                   });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses and estimators

/// Elementwise binary cross-entropy on logits against constant targets.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (!(logits.shape() == targets.shape()))
    detail::shape_mismatch("bce_with_logits", logits.shape(), targets.shape());
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T x = logits[i], y = targets[i];
    out[i] = std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  if (GradTape<T>::should_record({&logits})) {
    auto li = logits.impl();
    auto ti = targets.detach().impl();
    detail::record("bce_with_logits", out, {li}, [li, ti](std::span<const T> g) {
      if (auto* gl = grad_target(li))
        for (std::size_t i = 0; i < g.size(); ++i)
          (*gl)[i] += g[i] * (T(1) / (T(1) + std::exp(-li->data[i])) - ti->data[i]);
    });
  }
  return out;
}

/// Straight-through estimator: the forward value is `hard`, the backward pass
/// routes the incoming gradient unchanged into `soft`.
template <class T>
Tensor<T> straight_through(std::vector<T> hard, const Tensor<T>& soft) {
  Tensor<T> out(soft.shape(), std::move(hard));
  if (GradTape<T>::should_record({&soft})) {
    auto si = soft.impl();
    detail::record("straight_through", out, {si}, [si](std::span<const T> g) {
      if (auto* gs = grad_target(si))
        for (std::size_t i = 0; i < g.size(); ++i) (*gs)[i] += g[i];
    });
  }
  return out;
}

}  // namespace sgdvit::ops
