#pragma once

#include <string>

#include "sgdvit/nn/layers.hpp"

namespace sgdvit::model {

/// Cross-attention block with a post-norm residual:
///   x = Norm(mAtt(q, kv, kv) + q)
/// optionally followed by Norm(FFN(x) + x). The saliency filtering encoder
/// has no FFN; the decoder and the standard-transformer encoder have one.
template <class T>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(std::size_t dim, std::size_t heads, std::size_t ffn_hidden, Rng& rng)
      : mha_(dim, heads, rng), norm1_(dim) {
    if (ffn_hidden) {
      ffn_ = nn::Mlp<T>(dim, ffn_hidden, rng);
      norm2_ = nn::LayerNorm<T>(dim);
      has_ffn_ = true;
    }
  }

  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& kv) const {
    auto x = norm1_(ops::add(mha_(q, kv, kv), q));
    if (!has_ffn_) return x;
    return norm2_(ops::add(ffn_(x), x));
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("mha", mha_.params());
    p.merge("norm1", norm1_.params());
    if (has_ffn_) {
      p.merge("ffn", ffn_.params());
      p.merge("norm2", norm2_.params());
    }
    return p;
  }

  bool has_ffn() const { return has_ffn_; }
  nn::MultiHeadAttention<T>& mha() { return mha_; }
  nn::Mlp<T>& ffn() { return ffn_; }

 private:
  nn::MultiHeadAttention<T> mha_;
  nn::LayerNorm<T> norm1_, norm2_;
  nn::Mlp<T> ffn_;
  bool has_ffn_ = false;
};

struct SftConfig {
  std::size_t dim = 96;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 384;
  std::size_t encoder_depth = 1;
  std::size_t decoder_depth = 1;
  bool encoder_ffn = false;  // true gives the standard transformer encoder
};

/// Encoder: dynamic tokens attend to saliency features. Decoder: encoder
/// output attends to template tokens, then FFN + Norm. Token count is
/// preserved end to end.
template <class T>
class SaliencyFilterTransformer {
 public:
  SaliencyFilterTransformer() = default;
  SaliencyFilterTransformer(const SftConfig& cfg, Rng& rng) : cfg_(cfg) {
    for (std::size_t i = 0; i < cfg.encoder_depth; ++i)
      encoder_.emplace_back(cfg.dim, cfg.heads, cfg.encoder_ffn ? cfg.ffn_hidden : 0, rng);
    for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
      decoder_.emplace_back(cfg.dim, cfg.heads, cfg.ffn_hidden, rng);
  }

  Tensor<T> encode(const Tensor<T>& tokens, const Tensor<T>& saliency) const {
    check("encoder query", tokens);
    check("encoder key/value", saliency);
    Tensor<T> x = tokens;
    for (const auto& b : encoder_) x = b(x, saliency);
    return x;
  }

  Tensor<T> decode(const Tensor<T>& encoded, const Tensor<T>& templ) const {
    check("decoder query", encoded);
    check("decoder key/value", templ);
    Tensor<T> x = encoded;
    for (const auto& b : decoder_) x = b(x, templ);
    return x;
  }

  ParamSet<T> encoder_params() const { return blocks(encoder_); }
  ParamSet<T> decoder_params() const { return blocks(decoder_); }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.merge("encoder", encoder_params());
    p.merge("decoder", decoder_params());
    return p;
  }

  std::vector<AttentionBlock<T>>& encoder() { return encoder_; }
  std::vector<AttentionBlock<T>>& decoder() { return decoder_; }
  const SftConfig& config() const { return cfg_; }

 private:
  void check(const char* what, const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.dim)
      throw ShapeError(std::string("transformer ") + what + " " + x.shape().str() +
                       " does not match model dim " + std::to_string(cfg_.dim));
  }

  // A single block is stored under the bare prefix (`encoder.mha.w1.0`);
  // deeper stacks number their blocks (`encoder.1.mha.w1.0`).
  static ParamSet<T> blocks(const std::vector<AttentionBlock<T>>& bs) {
    ParamSet<T> p;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      if (bs.size() == 1) {
        const auto block = bs[i].params();
        for (const auto& e : block.entries()) p.add(e.name, e.tensor);
      } else {
        p.merge(std::to_string(i), bs[i].params());
      }
    }
    return p;
  }

  SftConfig cfg_;
  std::vector<AttentionBlock<T>> encoder_, decoder_;
};

}  // namespace sgdvit::model
