#pragma once

#include <cmath>

#include "sgdvit/nn/layers.hpp"

namespace sgdvit::model {

template <class T>
struct HeadOutputs {
  Tensor<T> cls;  // 1 x G x G logits
  Tensor<T> reg;  // 4 x G x G (l, t, r, b) distances in grid units, >= 0
};

/// Anchor-free classification and regression heads: a shared map norm on the
/// input, then two 3x3 convs per branch.
template <class T>
class TrackingHeads {
 public:
  TrackingHeads() = default;
  /// `reg_prior` is the distance the untrained regression head predicts
  /// (softplus of the last-layer bias); `output_scale` shrinks the last layer
  /// weights at init so that prior dominates early on.
  TrackingHeads(std::size_t channels, Rng& rng, double cls_bias = 0.0, double reg_prior = 1.0,
                double output_scale = 1.0)
      : channels_(channels),
        norm_(channels),
        cls1_(channels, channels, 3, {1, 1, 1}, rng),
        cls2_(channels, 1, 3, {1, 1, 1}, rng),
        reg1_(channels, channels, 3, {1, 1, 1}, rng),
        reg2_(channels, 4, 3, {1, 1, 1}, rng) {
    for (auto* c : {&cls2_, &reg2_})
      for (auto& w : c->weight().data()) w *= T(output_scale);
    for (auto& b : cls2_.bias().data()) b = T(cls_bias);
    // softplus^-1(y) = log(exp(y) - 1)
    const T inv = T(std::log(std::expm1(reg_prior)));
    for (auto& b : reg2_.bias().data()) b = inv;
  }

  HeadOutputs<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(0) != channels_)
      throw ShapeError("heads: expected " + std::to_string(channels_) + " x G x G input, got " +
                       x.shape().str());
    const auto n = norm_(x);
    return {cls2_(ops::relu(cls1_(n))), ops::softplus(reg2_(ops::relu(reg1_(n))))};
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("norm", norm_.params());
    p.merge("cls.0", cls1_.params());
    p.merge("cls.1", cls2_.params());
    p.merge("reg.0", reg1_.params());
    p.merge("reg.1", reg2_.params());
    return p;
  }

 private:
  std::size_t channels_ = 0;
  nn::MapNorm<T> norm_;
  nn::Conv2d<T> cls1_, cls2_, reg1_, reg2_;
};

}  // namespace sgdvit::model
