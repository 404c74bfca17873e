#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgdvit/core/error.hpp"

namespace sgdvit {

/// Architecture variants used for the ablation ladder.
enum class Variant {
  Baseline,  // backbone + heads on the raw similarity map
  Sit,       // standard transformer (with encoder FFN) over similarity-map tokens
  Sat,       // saliency filtering transformer, uniform coarse tokens
  SatDyn,    // full model: saliency-guided dynamic tokens
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Sit: return "sit";
    case Variant::Sat: return "sat";
    case Variant::SatDyn: return "sat_dyn";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "sit") return Variant::Sit;
  if (s == "sat") return Variant::Sat;
  if (s == "sat_dyn") return Variant::SatDyn;
  throw ConfigError("unknown variant '" + s + "' (expected baseline, sit, sat or sat_dyn)");
}

/// One backbone stage: conv (+ ReLU) optionally followed by max pooling.
struct BackboneStage {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pool_kernel = 0;  // 0 disables pooling
  std::size_t pool_stride = 0;
  bool relu = true;
};

struct BackboneConfig {
  std::vector<BackboneStage> stages;
  std::size_t template_size = 127;
  std::size_t search_size = 287;
  // Feature sizes the stages must produce; checked when the backbone is built.
  std::size_t template_feature = 6;
  std::size_t search_feature = 26;

  /// AlexNet-like 5-conv stack: 3 -> 48 -> 96 -> 192 -> 192 -> channels.
  static BackboneConfig alexnet_like(std::size_t channels) {
    BackboneConfig c;
    c.stages = {{48, 11, 2, 3, 2, true},
                {96, 5, 1, 3, 2, true},
                {192, 3, 1, 0, 0, true},
                {192, 3, 1, 0, 0, true},
                {channels, 3, 1, 0, 0, false}};
    return c;
  }

  /// Same geometry with every stage `divisor` times narrower (tests).
  static BackboneConfig narrow(std::size_t channels, std::size_t divisor) {
    auto c = alexnet_like(channels);
    for (std::size_t i = 0; i + 1 < c.stages.size(); ++i)
      c.stages[i].out_channels = std::max<std::size_t>(1, c.stages[i].out_channels / divisor);
    return c;
  }
};

/// Every architectural hyperparameter, including the ablation toggles.
struct ModelConfig {
  Variant variant = Variant::SatDyn;
  std::size_t channels = 96;  // C, shared by backbone output, tokens and the transformer
  std::size_t heads = 4;
  std::size_t grid = 16;    // G: adjusted search grid
  std::size_t window = 4;   // w: window edge in grid cells
  double theta = 0.5;       // fine-window occupancy threshold
  double tau = 1.0;         // Gumbel-Softmax temperature
  std::size_t ffn_mult = 4;
  std::size_t encoder_depth = 1;
  std::size_t decoder_depth = 1;
  bool positional_encoding = true;
  bool head_skip = true;        // heads also see the aligned saliency/similarity map
  bool straight_through = true;  // token gates pass gradients into the saliency map
  double cls_bias_init = 0.0;
  double output_init_scale = 0.1;  // shrinks the last conv of each head at init
  std::uint64_t init_seed = 1;
  BackboneConfig backbone = BackboneConfig::alexnet_like(96);

  std::size_t windows_per_side() const { return grid / window; }
  std::size_t window_count() const { return windows_per_side() * windows_per_side(); }

  void validate() const {
    if (channels == 0 || heads == 0 || channels % heads != 0)
      throw ConfigError("model.channels must be divisible by model.heads");
    if (positional_encoding && channels % 4 != 0)
      throw ConfigError("model.channels must be a multiple of 4 for positional encodings");
    if (window < 2 || window % 2 != 0) throw ConfigError("model.window must be even and >= 2");
    if (grid % window != 0) throw ConfigError("model.grid must be divisible by model.window");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("model.theta must lie in [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("model.tau must be > 0");
    if (backbone.stages.empty() || backbone.stages.back().out_channels != channels)
      throw ConfigError("last backbone stage must produce model.channels channels");
    if (channels < 3) throw ConfigError("model.channels must be >= 3");
  }

  /// Narrow configuration with the default geometry, for fast tests.
  static ModelConfig tiny(Variant v = Variant::SatDyn) {
    ModelConfig c;
    c.variant = v;
    c.channels = 12;
    c.heads = 2;
    c.backbone = BackboneConfig::narrow(12, 8);
    return c;
  }
};

}  // namespace sgdvit
