#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/conv.hpp"
#include "sgdvit/core/ops.hpp"
#include "sgdvit/core/params.hpp"

namespace sgdvit::nn {

/// y = x W + b over the last axis of a rank-2 input (rows are tokens).
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true)
      : in_(in), out_(out), weight_(kaiming_uniform<T>(Shape{in, out}, in, rng)) {
    if (with_bias) bias_ = zeros_parameter<T>(Shape{out});
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ShapeError("linear: input " + x.shape().str() + " does not match in_features " +
                       std::to_string(in_));
    auto y = ops::matmul(x, weight_);
    return bias_.defined() ? ops::add(y, bias_) : y;
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("weight", weight_);
    if (bias_.defined()) p.add("bias", bias_);
    return p;
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor<T> weight_, bias_;
};

/// Linear -> ReLU -> Linear, shape preserving on the last axis.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t dim, std::size_t hidden, Rng& rng) : fc1_(dim, hidden, rng), fc2_(hidden, dim, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2_(ops::relu(fc1_(x))); }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("fc1", fc1_.params());
    p.merge("fc2", fc2_.params());
    return p;
  }

  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }

 private:
  Linear<T> fc1_, fc2_;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, T eps = T(1e-5))
      : gamma_(constant_parameter<T>(Shape{dim}, T(1))), beta_(zeros_parameter<T>(Shape{dim})), eps_(eps) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return ops::layer_norm(x, gamma_, beta_, eps_); }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("gamma", gamma_);
    p.add("beta", beta_);
    return p;
  }

 private:
  Tensor<T> gamma_, beta_;
  T eps_ = T(1e-5);
};

/// Normalizes a C x H x W map over all of its values (one-group group norm),
/// then applies a per-channel scale and shift.
template <class T>
class MapNorm {
 public:
  MapNorm() = default;
  explicit MapNorm(std::size_t channels, T eps = T(1e-5))
      : gamma_(constant_parameter<T>(Shape{channels, 1, 1}, T(1))),
        beta_(zeros_parameter<T>(Shape{channels, 1, 1})), eps_(eps) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(0) != gamma_.dim(0))
      throw ShapeError("map norm: expected " + std::to_string(gamma_.dim(0)) + " x H x W, got " + x.shape().str());
    const std::size_t n = x.numel();
    auto flat = ops::layer_norm(ops::reshape(x, Shape{1, n}), Tensor<T>::ones(Shape{n}), Tensor<T>::zeros(Shape{n}), eps_);
    return ops::add(ops::mul(ops::reshape(flat, x.shape()), gamma_), beta_);
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("gamma", gamma_);
    p.add("beta", beta_);
    return p;
  }

 private:
  Tensor<T> gamma_, beta_;
  T eps_ = T(1e-5);
};

/// 2-D convolution with a square kernel.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, ops::ConvGeometry g, Rng& rng)
      : in_(in), out_(out), kernel_(kernel), geom_(g),
        weight_(kaiming_uniform<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, rng)),
        bias_(zeros_parameter<T>(Shape{out})) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::size_t c = x.rank() == 4 ? x.dim(1) : x.dim(0);
    if (c != in_)
      throw ShapeError("conv: input " + x.shape().str() + " has " + std::to_string(c) +
                       " channels, layer expects " + std::to_string(in_));
    return ops::conv2d(x, weight_, bias_, geom_);
  }

  /// Spatial output size for an input extent; throws if the kernel does not fit.
  std::size_t output_size(std::size_t n) const {
    auto o = ops::conv_output_size(n, kernel_, geom_);
    if (!o) throw ShapeError("conv: input extent " + std::to_string(n) + " smaller than kernel");
    return *o;
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("weight", weight_);
    p.add("bias", bias_);
    return p;
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return kernel_; }
  const ops::ConvGeometry& geometry() const { return geom_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0, kernel_ = 1;
  ops::ConvGeometry geom_;
  Tensor<T> weight_, bias_;
};

/// Transposed 2-D convolution with a square kernel.
template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, ops::ConvGeometry g, Rng& rng,
                  std::size_t output_padding = 0)
      : in_(in), out_(out), kernel_(kernel), geom_(g), output_padding_(output_padding),
        weight_(kaiming_uniform<T>(Shape{in, out, kernel, kernel}, in * kernel * kernel, rng)),
        bias_(zeros_parameter<T>(Shape{out})) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::conv_transpose2d(x, weight_, bias_, geom_, output_padding_);
  }

  std::size_t output_size(std::size_t n) const {
    return ops::conv_transpose_output_size(n, kernel_, geom_, output_padding_);
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("weight", weight_);
    p.add("bias", bias_);
    return p;
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0, kernel_ = 1;
  ops::ConvGeometry geom_;
  std::size_t output_padding_ = 0;
  Tensor<T> weight_, bias_;
};

/// Row-stochastic attention weights Softmax(Q K^T / sqrt(c)).
template <class T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t scale_dim) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1))
    throw ShapeError("attention: query " + q.shape().str() + " and key " + k.shape().str() +
                     " dims differ");
  auto scores = ops::matmul(q, ops::transpose(k), "attn_qk");
  return ops::softmax(ops::scale(scores, T(1) / std::sqrt(T(scale_dim))));
}

/// Softmax(Q K^T / sqrt(c)) V; c defaults to the feature dim of Q.
template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::size_t scale_dim = 0) {
  if (v.rank() != 2 || k.rank() != 2 || k.dim(0) != v.dim(0))
    throw ShapeError("attention: key " + k.shape().str() + " and value " + v.shape().str() +
                     " token counts differ");
  auto a = attention_weights(q, k, scale_dim ? scale_dim : q.dim(1));
  return ops::matmul(a, v, "attn_av");
}

/// Multi-head attention: Cat(a^1..a^N) W_c with
/// a^j = Att(Q W1^j, K W2^j, V W3^j), each W^j of size C x C/N, scaled by
/// sqrt(C/N) inside each head.
template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng) : dim_(dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0)
      throw ConfigError("multi-head attention: model dim " + std::to_string(dim) +
                        " not divisible by " + std::to_string(heads) + " heads");
    const std::size_t hd = dim / heads;
    for (std::size_t j = 0; j < heads; ++j) {
      w1_.push_back(kaiming_uniform<T>(Shape{dim, hd}, dim, rng));
      w2_.push_back(kaiming_uniform<T>(Shape{dim, hd}, dim, rng));
      w3_.push_back(kaiming_uniform<T>(Shape{dim, hd}, dim, rng));
    }
    wc_ = kaiming_uniform<T>(Shape{dim, dim}, dim, rng);
  }

  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const {
    for (const auto* t : {&q, &k, &v})
      if (t->rank() != 2 || t->dim(1) != dim_)
        throw ShapeError("multi-head attention: input " + t->shape().str() +
                         " does not match model dim " + std::to_string(dim_));
    if (k.dim(0) != v.dim(0))
      throw ShapeError("multi-head attention: key/value token counts differ");
    std::vector<Tensor<T>> heads;
    heads.reserve(heads_);
    for (std::size_t j = 0; j < heads_; ++j)
      heads.push_back(scaled_dot_attention(ops::matmul(q, w1_[j]), ops::matmul(k, w2_[j]),
                                           ops::matmul(v, w3_[j]), head_dim()));
    return ops::matmul(heads_ == 1 ? heads.front() : ops::concat(heads, 1), wc_);
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    for (std::size_t j = 0; j < heads_; ++j) p.add("w1." + std::to_string(j), w1_[j]);
    for (std::size_t j = 0; j < heads_; ++j) p.add("w2." + std::to_string(j), w2_[j]);
    for (std::size_t j = 0; j < heads_; ++j) p.add("w3." + std::to_string(j), w3_[j]);
    p.add("wc", wc_);
    return p;
  }

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return dim_ / heads_; }

  std::vector<Tensor<T>>& w1() { return w1_; }
  std::vector<Tensor<T>>& w2() { return w2_; }
  std::vector<Tensor<T>>& w3() { return w3_; }
  Tensor<T>& wc() { return wc_; }

 private:
  std::size_t dim_ = 0, heads_ = 1;
  std::vector<Tensor<T>> w1_, w2_, w3_;
  Tensor<T> wc_;
};

/// Fixed 2-D sinusoidal encodings. Each row of `centers` is a (y, x) position
/// in units where the grid spans [0, extent]; the first half of the channels
/// encode y and the second half x, as interleaved sin/cos pairs.
template <class T>
Tensor<T> sinusoidal_2d(const std::vector<std::pair<double, double>>& centers, std::size_t dim,
                        double extent) {
  if (dim % 4 != 0) throw ConfigError("positional encoding dim must be a multiple of 4");
  const std::size_t quarter = dim / 4;
  constexpr double kTwoPi = 6.283185307179586;
  constexpr double kTemperature = 100.0;
  Tensor<T> pe(Shape{centers.size(), dim});
  for (std::size_t n = 0; n < centers.size(); ++n) {
    const double coords[2] = {centers[n].first / extent * kTwoPi, centers[n].second / extent * kTwoPi};
    for (std::size_t axis = 0; axis < 2; ++axis)
      for (std::size_t i = 0; i < quarter; ++i) {
        const double freq = std::pow(kTemperature, -double(i) / double(quarter));
        const std::size_t base = n * dim + axis * (dim / 2) + 2 * i;
        pe[base] = T(std::sin(coords[axis] * freq));
        pe[base + 1] = T(std::cos(coords[axis] * freq));
      }
  }
  return pe;
}

}  // namespace sgdvit::nn
