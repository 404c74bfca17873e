#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/flops.hpp"
#include "sgdvit/model/backbone.hpp"
#include "sgdvit/model/config.hpp"
#include "sgdvit/model/embedding.hpp"
#include "sgdvit/model/heads.hpp"
#include "sgdvit/model/saliency.hpp"
#include "sgdvit/model/sft.hpp"

namespace sgdvit::model {

/// Maps head-grid indices to search-crop pixel coordinates: cell g is centered
/// at origin + step * g (pixel k centered at k + 0.5).
struct GridFrame {
  double origin;
  double step;
  double to_crop(double g) const { return origin + step * g; }
  double to_grid(double c) const { return (c - origin) / step; }
};

template <class T>
struct TemplateEncoding {
  Tensor<T> features;  // C x Ht x Wt backbone features
  Tensor<T> tokens;    // Ht*Wt x C adjusted template tokens (transformer variants)
};

struct ForwardOptions {
  std::uint64_t gumbel_seed = 0;
  std::optional<std::size_t> forced_fine;  // override mask decisions with k FINE windows
};

template <class T>
struct ModelOutput {
  HeadOutputs<T> heads;
  Tensor<T> saliency_map;  // M, 1 x H x W (saliency variants)
  Tensor<T> mask;          // hard P, G x G (dynamic variant, unless forced)
  std::vector<TokenOrigin> origins;
  std::size_t n_tokens = 0, k_fine = 0;
  FlopReport encoder_flops, decoder_flops, total_flops;
};

/// Full tracker network for every ablation variant:
///   baseline  heads on the resampled similarity map
///   sit       self-attention encoder (with FFN) over similarity tokens,
///             decoder over template tokens
///   sat       saliency mining + FFN-free cross-attention encoder over
///             uniform coarse tokens
///   sat_dyn   as sat with saliency-guided two-level tokens
template <class T>
class SgdVit {
 public:
  explicit SgdVit(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng root(cfg_.init_seed);
    Rng r_backbone = root.split(), r_adjust = root.split(), r_mining = root.split(),
        r_embed = root.split(), r_sft = root.split(), r_heads = root.split();
    backbone_ = Backbone<T>(cfg_.backbone, 3, r_backbone);
    const std::size_t C = cfg_.channels, ht = cfg_.backbone.template_feature,
                      hs = cfg_.backbone.search_feature;
    if (ht > hs) throw ConfigError("template features larger than search features");
    corr_ = hs - ht + 1;
    const bool transformer = cfg_.variant != Variant::Baseline;
    const bool saliency = cfg_.variant == Variant::Sat || cfg_.variant == Variant::SatDyn;
    if (transformer) adjust_ = AdjustSampler<T>(C, r_adjust);
    SftConfig sc{C, cfg_.heads, cfg_.ffn_mult * C, cfg_.encoder_depth, cfg_.decoder_depth, false};
    if (saliency) {
      miner_ = SaliencyMiner<T>(C, corr_, corr_, r_mining);
      embed_ = EmbedWeights<T>(C, cfg_.window, C, r_embed);
      sft_ = SaliencyFilterTransformer<T>(sc, r_sft);
    } else if (cfg_.variant == Variant::Sit) {
      sc.encoder_ffn = true;
      sft_ = SaliencyFilterTransformer<T>(sc, r_sft);
    }
    // nominal target half-extent: the context crop maps a target to about
    // half of the template side, at the same scale in the search crop
    const double half_extent = 0.25 * double(cfg_.backbone.template_size) / grid_frame().step;
    heads_ = TrackingHeads<T>(C, r_heads, cfg_.cls_bias_init, half_extent, cfg_.output_init_scale);
  }

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return cfg_.variant; }
  std::size_t correlation_size() const { return corr_; }

  GridFrame grid_frame() const {
    const auto f = backbone_.frame();
    const double ht = double(cfg_.backbone.template_feature);
    return {f.offset + f.stride * (ht - 1) / 2, f.stride * double(corr_ - 1) / double(cfg_.grid - 1)};
  }

  TemplateEncoding<T> encode_template(const Tensor<T>& crop) const {
    check_crop(crop, cfg_.backbone.template_size, "template");
    TemplateEncoding<T> enc;
    enc.features = backbone_(crop);
    if (cfg_.variant != Variant::Baseline) {
      auto adj = adjust_.features(enc.features);
      const std::size_t h = adj.dim(1), w = adj.dim(2);
      enc.tokens = to_tokens(adj);
      if (cfg_.positional_encoding) enc.tokens = ops::add(enc.tokens, grid_encoding(h, w));
    }
    return enc;
  }

  ModelOutput<T> forward_search(const TemplateEncoding<T>& templ, const Tensor<T>& crop,
                                const ForwardOptions& opt = {}) const {
    check_crop(crop, cfg_.backbone.search_size, "search");
    FlopScope total("forward");
    ModelOutput<T> out;
    const std::size_t G = cfg_.grid;
    const auto tf = templ.features;
    auto xf = backbone_(crop);
    auto s1 = cross_correlate(xf, tf, T(1) / T(tf.dim(1) * tf.dim(2)));

    if (cfg_.variant == Variant::Baseline) {
      out.heads = heads_(ops::resize_bilinear(s1, G, G));
    } else if (cfg_.variant == Variant::Sit) {
      auto s1g = ops::resize_bilinear(s1, G, G);
      auto tokens = to_tokens(s1g);
      if (cfg_.positional_encoding) tokens = ops::add(tokens, grid_encoding(G, G));
      Tensor<T> encoded, decoded;
      {
        FlopScope enc("encoder");
        encoded = sft_.encode(tokens, tokens);
        out.encoder_flops = enc.close();
      }
      {
        FlopScope dec("decoder");
        decoded = sft_.decode(encoded, templ.tokens);
        out.decoder_flops = dec.close();
      }
      out.n_tokens = G * G;
      auto map = from_tokens(decoded, G, G);
      out.heads = heads_(cfg_.head_skip ? ops::add(map, s1g) : map);
    } else {
      auto sal = miner_(s1);
      out.saliency_map = sal.map;
      // Adjusted search features sampled over the region the correlation
      // grid covers, so tokens, saliency features and heads share one frame.
      const double c0 = (double(tf.dim(1)) - 1) / 2;
      const double c1 = c0 + double(corr_ - 1);
      auto xg = adjust_(xf, G, ops::SampleWindow{c0, c0, c1, c1});
      auto flg = ops::resize_bilinear(sal.features, G, G);

      WindowDecisions<T> decisions;
      if (opt.forced_fine) {
        decisions = forced_decisions<T>(G, cfg_.window, *opt.forced_fine);
      } else if (cfg_.variant == Variant::Sat) {
        decisions = forced_decisions<T>(G, cfg_.window, 0);
      } else {
        auto mask = gumbel_binarize(sal.map, G, cfg_.tau, opt.gumbel_seed);
        out.mask = mask.hard;
        decisions = partition_and_score(mask.hard, cfg_.window, cfg_.theta);
      }
      EmbedOptions eo{cfg_.positional_encoding, cfg_.straight_through};
      auto set = embed_tokens(xg, decisions, embed_, eo);
      out.origins = set.origins;
      out.n_tokens = set.size();
      out.k_fine = decisions.fine_count();

      Tensor<T> encoded, decoded;
      {
        FlopScope enc("encoder");
        encoded = sft_.encode(set.tokens, to_tokens(flg));
        out.encoder_flops = enc.close();
      }
      {
        FlopScope dec("decoder");
        decoded = sft_.decode(encoded, templ.tokens);
        out.decoder_flops = dec.close();
      }
      auto map = detokenize(decoded, set);
      out.heads = heads_(cfg_.head_skip ? ops::add(map, flg) : map);
    }
    out.total_flops = total.close();
    return out;
  }

  /// Parameters of the modules the configured variant actually contains.
  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("backbone", backbone_.params());
    switch (cfg_.variant) {
      case Variant::Baseline:
        break;
      case Variant::Sit:
        p.merge("adjust", adjust_.params());
        p.merge("sit", sft_.params());
        break;
      case Variant::Sat:
      case Variant::SatDyn:
        p.merge("adjust", adjust_.params());
        p.merge("mining", miner_.params());
        p.merge("embed", embed_.params());
        p.merge("sft", sft_.params());
        break;
    }
    p.merge("heads", heads_.params());
    return p;
  }

  Backbone<T>& backbone() { return backbone_; }
  AdjustSampler<T>& adjust() { return adjust_; }
  SaliencyMiner<T>& miner() { return miner_; }
  EmbedWeights<T>& embed() { return embed_; }
  SaliencyFilterTransformer<T>& transformer() { return sft_; }

 private:
  void check_crop(const Tensor<T>& crop, std::size_t size, const char* what) const {
    if (crop.rank() != 3 || crop.dim(0) != 3 || crop.dim(1) != size || crop.dim(2) != size)
      throw ShapeError(std::string(what) + " crop must be 3 x " + std::to_string(size) + " x " +
                       std::to_string(size) + ", got " + crop.shape().str());
  }

  static Tensor<T> to_tokens(const Tensor<T>& x) {
    return ops::transpose(ops::reshape(x, Shape{x.dim(0), x.dim(1) * x.dim(2)}));
  }
  static Tensor<T> from_tokens(const Tensor<T>& t, std::size_t h, std::size_t w) {
    return ops::reshape(ops::transpose(t), Shape{t.dim(1), h, w});
  }
  Tensor<T> grid_encoding(std::size_t h, std::size_t w) const {
    std::vector<std::pair<double, double>> centers;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) centers.emplace_back(double(y) + 0.5, double(x) + 0.5);
    return nn::sinusoidal_2d<T>(centers, cfg_.channels, double(std::max(h, w)));
  }

  ModelConfig cfg_;
  std::size_t corr_ = 0;
  Backbone<T> backbone_;
  AdjustSampler<T> adjust_;
  SaliencyMiner<T> miner_;
  EmbedWeights<T> embed_;
  SaliencyFilterTransformer<T> sft_;
  TrackingHeads<T> heads_;
};

}  // namespace sgdvit::model
