#pragma once

#include "sgdvit/nn/layers.hpp"

namespace sgdvit::model {

/// Depthwise correlation of template features over search features, stride 1,
/// no padding: C x Hs x Ws and C x Ht x Wt give C x (Hs-Ht+1) x (Ws-Wt+1).
template <class T>
Tensor<T> cross_correlate(const Tensor<T>& search_feat, const Tensor<T>& template_feat, T scale = T(1)) {
  if (search_feat.rank() != 3 || template_feat.rank() != 3)
    throw ShapeError("cross_correlate: expected C x H x W maps, got " + search_feat.shape().str() +
                     " and " + template_feat.shape().str());
  if (search_feat.dim(0) != template_feat.dim(0))
    throw ShapeError("cross_correlate: channel counts differ (" + search_feat.shape().str() + " vs " +
                     template_feat.shape().str() + ")");
  return ops::depthwise_xcorr(search_feat, template_feat, scale);
}

template <class T>
struct SaliencyArtifacts {
  Tensor<T> s2;        // C x H x W, fused similarity
  Tensor<T> features;  // Fl: C x H x W
  Tensor<T> map;       // M: 1 x H x W
};

/// Spatial MLP fusion, conv/deconv channel fusion, then two 3x3 conv branches
/// for the saliency features and the single-channel saliency map.
template <class T>
class SaliencyMiner {
 public:
  SaliencyMiner() = default;
  SaliencyMiner(std::size_t channels, std::size_t height, std::size_t width, Rng& rng)
      : channels_(channels), height_(height), width_(width),
        mlp_(height * width, 2 * height * width, rng),
        conv_(channels, channels / 2, 3, {1, 1, 1}, rng),
        deconv_(channels / 2, channels, 3, {1, 1, 1}, rng),
        feature_branch_(channels, channels, 3, {1, 1, 1}, rng),
        map_branch_(channels, 1, 3, {1, 1, 1}, rng) {
    if (conv_.output_size(height) != height || deconv_.output_size(height) != height ||
        conv_.output_size(width) != width || deconv_.output_size(width) != width)
      throw ShapeError("saliency miner: conv/deconv pair does not preserve spatial size");
  }

  SaliencyArtifacts<T> operator()(const Tensor<T>& s1) const {
    if (s1.rank() != 3 || s1.dim(0) != channels_ || s1.dim(1) != height_ || s1.dim(2) != width_)
      throw ShapeError("saliency miner: expected " +
                       Shape{channels_, height_, width_}.str() + ", got " + s1.shape().str());
    // rows are channels, columns spatial positions: the MLP mixes positions
    auto spatial = mlp_(ops::reshape(s1, Shape{channels_, height_ * width_}));
    auto fused = ops::reshape(spatial, s1.shape());
    auto s2 = deconv_(ops::relu(conv_(fused)));
    return {s2, feature_branch_(s2), map_branch_(s2)};
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("mlp", mlp_.params());
    p.merge("conv", conv_.params());
    p.merge("deconv", deconv_.params());
    p.merge("feature_branch", feature_branch_.params());
    p.merge("map_branch", map_branch_.params());
    return p;
  }

  nn::Mlp<T>& mlp() { return mlp_; }
  nn::Conv2d<T>& conv() { return conv_; }
  nn::ConvTranspose2d<T>& deconv() { return deconv_; }
  nn::Conv2d<T>& feature_branch() { return feature_branch_; }
  nn::Conv2d<T>& map_branch() { return map_branch_; }

 private:
  std::size_t channels_ = 0, height_ = 0, width_ = 0;
  nn::Mlp<T> mlp_;
  nn::Conv2d<T> conv_;
  nn::ConvTranspose2d<T> deconv_;
  nn::Conv2d<T> feature_branch_, map_branch_;
};

}  // namespace sgdvit::model
