#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgdvit/model/config.hpp"
#include "sgdvit/nn/layers.hpp"

namespace sgdvit::model {

/// Maps feature-grid indices back to input pixel coordinates: feature i sits
/// over the receptive-field center `offset + stride * i` (continuous pixel
/// coordinates, pixel k centered at k + 0.5).
struct FeatureFrame {
  double offset;
  double stride;
};

/// Siamese feature extractor shared by template and search crops.
template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, std::size_t in_channels, Rng& rng) : cfg_(cfg) {
    std::size_t c = in_channels;
    for (const auto& s : cfg.stages) {
      convs_.emplace_back(c, s.out_channels, s.kernel, ops::ConvGeometry{s.stride, 0, 1}, rng);
      c = s.out_channels;
    }
    const auto t = output_size(cfg.template_size);
    const auto x = output_size(cfg.search_size);
    if (t != cfg.template_feature || x != cfg.search_feature)
      throw ConfigError("backbone stages map " + std::to_string(cfg.template_size) + " -> " +
                        std::to_string(t) + " and " + std::to_string(cfg.search_size) + " -> " +
                        std::to_string(x) + ", expected " + std::to_string(cfg.template_feature) +
                        " and " + std::to_string(cfg.search_feature));
  }

  /// Spatial feature extent for an input extent (shape arithmetic only).
  std::size_t output_size(std::size_t n) const {
    for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
      const auto& s = cfg_.stages[i];
      auto o = ops::conv_output_size(n, s.kernel, {s.stride, 0, 1});
      if (!o) throw ShapeError("backbone: input extent too small at stage " + std::to_string(i));
      n = *o;
      if (s.pool_kernel) {
        o = ops::conv_output_size(n, s.pool_kernel, {s.pool_stride, 0, 1});
        if (!o) throw ShapeError("backbone: pooling window too large at stage " + std::to_string(i));
        n = *o;
      }
    }
    return n;
  }

  FeatureFrame frame() const {
    // Compose per-layer maps: in = layer_stride * out + (kernel - 1) / 2.
    double offset = 0, stride = 1;
    for (const auto& s : cfg_.stages) {
      offset += stride * (double(s.kernel) - 1) / 2;
      stride *= double(s.stride);
      if (s.pool_kernel) {
        offset += stride * (double(s.pool_kernel) - 1) / 2;
        stride *= double(s.pool_stride);
      }
    }
    return {offset + 0.5, stride};
  }

  /// image_crop: 3 x S x S with S the template or search size -> C x H x W.
  Tensor<T> operator()(const Tensor<T>& crop) const {
    if (crop.rank() != 3 || crop.dim(1) != crop.dim(2) ||
        (crop.dim(1) != cfg_.template_size && crop.dim(1) != cfg_.search_size))
      throw ShapeError("backbone: unsupported crop " + crop.shape().str() + "; supported sizes are " +
                       std::to_string(cfg_.template_size) + " and " + std::to_string(cfg_.search_size));
    Tensor<T> x = crop;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& s = cfg_.stages[i];
      x = convs_[i](x);
      if (s.relu) x = ops::relu(x);
      if (s.pool_kernel) x = ops::max_pool2d(x, s.pool_kernel, s.pool_stride);
    }
    return x;
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    for (std::size_t i = 0; i < convs_.size(); ++i) p.merge("conv" + std::to_string(i + 1), convs_[i].params());
    return p;
  }

  std::vector<nn::Conv2d<T>>& convs() { return convs_; }
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<nn::Conv2d<T>> convs_;
};

/// Feature adjustment sampling: three parallel branches with 3x3, 5x5 and 7x7
/// receptive fields (one, two and three stacked 3x3 convs with replicate
/// padding), concatenated back to C channels, then optionally resampled onto
/// a G x G grid.
template <class T>
class AdjustSampler {
 public:
  AdjustSampler() = default;
  AdjustSampler(std::size_t channels, Rng& rng) : channels_(channels) {
    const std::size_t base = channels / 3;
    const std::size_t widths[3] = {base, base, channels - 2 * base};
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<nn::Conv2d<T>> branch;
      std::size_t in = channels;
      for (std::size_t d = 0; d <= b; ++d) {
        branch.emplace_back(in, widths[b], 3, ops::ConvGeometry{1, 0, 1}, rng);
        in = widths[b];
      }
      branches_.push_back(std::move(branch));
    }
  }

  /// Multi-receptive-field features at the input resolution.
  Tensor<T> features(const Tensor<T>& feat) const {
    if (feat.rank() != 3 || feat.dim(0) != channels_)
      throw ShapeError("adjust: expected " + std::to_string(channels_) + " x H x W, got " +
                       feat.shape().str());
    std::vector<Tensor<T>> outs;
    for (const auto& branch : branches_) {
      Tensor<T> x = feat;
      for (std::size_t d = 0; d < branch.size(); ++d) {
        x = branch[d](ops::pad_replicate(x, 1));
        if (d + 1 < branch.size()) x = ops::relu(x);
      }
      outs.push_back(x);
    }
    return ops::concat(outs, 0);
  }

  /// Branch features resampled onto a grid x grid lattice. `window` selects the
  /// sampled source region (default: the whole map, corners aligned).
  Tensor<T> operator()(const Tensor<T>& feat, std::size_t grid,
                       std::optional<ops::SampleWindow> window = std::nullopt) const {
    return ops::resize_bilinear(features(feat), grid, grid, window);
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    for (std::size_t b = 0; b < branches_.size(); ++b)
      for (std::size_t d = 0; d < branches_[b].size(); ++d)
        p.merge("branch" + std::to_string(b) + "." + std::to_string(d), branches_[b][d].params());
    return p;
  }

  std::vector<std::vector<nn::Conv2d<T>>>& branches() { return branches_; }

 private:
  std::size_t channels_ = 0;
  std::vector<std::vector<nn::Conv2d<T>>> branches_;
};

}  // namespace sgdvit::model
