#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "sgdvit/config/keyvalue.hpp"
#include "sgdvit/data/synth.hpp"
#include "sgdvit/model/config.hpp"
#include "sgdvit/track/trainer.hpp"

namespace sgdvit::config {

/// Everything a command needs, read from one flat key-value file.
///
///   seed                 shared by model init, training and tracking
///   model.*              architecture and ablation variant
///   train.*              toy training schedule and loss
///   tracker.*            inference-time box update
///   paths.*              checkpoint, sequence and output locations
///   synth.*              training sequence when paths.sequence is empty
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  std::size_t backbone_divisor = 1;  // >1 narrows the hidden backbone stages
  track::TrainConfig train;
  track::LossOptions loss;
  track::TrackerParams tracker;
  std::string checkpoint, sequence, output = ".";
  data::SynthSpec synth;

  /// Reads `kv`; unknown keys are an error so typos never pass silently.
  static RunConfig from(const KeyValues& kv) {
    RunConfig c;
    c.seed = kv.get("seed", c.seed);

    auto& m = c.model;
    m.variant = parse_variant(kv.get<std::string>("model.variant", variant_name(m.variant)));
    m.channels = kv.get("model.channels", m.channels);
    m.heads = kv.get("model.heads", m.heads);
    m.grid = kv.get("model.grid", m.grid);
    m.window = kv.get("model.window", m.window);
    m.theta = kv.get("model.theta", m.theta);
    m.tau = kv.get("model.tau", m.tau);
    m.ffn_mult = kv.get("model.ffn_mult", m.ffn_mult);
    m.encoder_depth = kv.get("model.encoder_depth", m.encoder_depth);
    m.decoder_depth = kv.get("model.decoder_depth", m.decoder_depth);
    m.positional_encoding = kv.get("model.positional_encoding", m.positional_encoding);
    m.head_skip = kv.get("model.head_skip", m.head_skip);
    m.straight_through = kv.get("model.straight_through", m.straight_through);
    m.cls_bias_init = kv.get("model.cls_bias_init", m.cls_bias_init);
    m.output_init_scale = kv.get("model.output_init_scale", m.output_init_scale);
    c.backbone_divisor = kv.get("model.backbone_divisor", c.backbone_divisor);

    auto& t = c.train;
    t.iterations = kv.get("train.iterations", t.iterations);
    t.samples = kv.get("train.samples", t.samples);
    t.lr_start = kv.get("train.lr_start", t.lr_start);
    t.lr_end = kv.get("train.lr_end", t.lr_end);
    t.momentum = kv.get("train.momentum", t.momentum);
    t.grad_clip = kv.get("train.grad_clip", t.grad_clip);
    t.jitter = kv.get("train.jitter", t.jitter);
    t.scale_jitter = kv.get("train.scale_jitter", t.scale_jitter);
    c.loss.positive_radius = kv.get("train.positive_radius", c.loss.positive_radius);
    c.loss.reg_weight = kv.get("train.reg_weight", c.loss.reg_weight);

    auto& k = c.tracker;
    k.penalty = kv.get("tracker.penalty", k.penalty);
    k.size_ema = kv.get("tracker.size_ema", k.size_ema);
    k.context = kv.get("tracker.context", k.context);
    k.min_size = kv.get("tracker.min_size", k.min_size);

    c.checkpoint = kv.get("paths.checkpoint", c.checkpoint);
    c.sequence = kv.get("paths.sequence", c.sequence);
    c.output = kv.get("paths.output", c.output);
    c.synth = data::SynthSpec::from(kv, "synth.");

    const auto unused = kv.unused_keys();
    if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
    c.finalize();
    return c;
  }

  static RunConfig load(const std::string& path) { return from(KeyValues::load(path)); }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("seed", seed);
    const auto& m = model;
    kv.set("model.variant", variant_name(m.variant));
    kv.set("model.channels", m.channels);
    kv.set("model.heads", m.heads);
    kv.set("model.grid", m.grid);
    kv.set("model.window", m.window);
    kv.set("model.theta", m.theta);
    kv.set("model.tau", m.tau);
    kv.set("model.ffn_mult", m.ffn_mult);
    kv.set("model.encoder_depth", m.encoder_depth);
    kv.set("model.decoder_depth", m.decoder_depth);
    kv.set("model.positional_encoding", m.positional_encoding);
    kv.set("model.head_skip", m.head_skip);
    kv.set("model.straight_through", m.straight_through);
    kv.set("model.cls_bias_init", m.cls_bias_init);
    kv.set("model.output_init_scale", m.output_init_scale);
    kv.set("model.backbone_divisor", backbone_divisor);
    kv.set("train.iterations", train.iterations);
    kv.set("train.samples", train.samples);
    kv.set("train.lr_start", train.lr_start);
    kv.set("train.lr_end", train.lr_end);
    kv.set("train.momentum", train.momentum);
    kv.set("train.grad_clip", train.grad_clip);
    kv.set("train.jitter", train.jitter);
    kv.set("train.scale_jitter", train.scale_jitter);
    kv.set("train.positive_radius", loss.positive_radius);
    kv.set("train.reg_weight", loss.reg_weight);
    kv.set("tracker.penalty", tracker.penalty);
    kv.set("tracker.size_ema", tracker.size_ema);
    kv.set("tracker.context", tracker.context);
    kv.set("tracker.min_size", tracker.min_size);
    kv.set("paths.checkpoint", checkpoint);
    kv.set("paths.sequence", sequence);
    kv.set("paths.output", output);
    synth.to(kv, "synth.");
    return kv;
  }

  bool operator==(const RunConfig& o) const { return to_kv() == o.to_kv(); }

  /// SGDVIT_SEED, when set, replaces the configured seed.
  void apply_environment() {
    if (const char* s = std::getenv("SGDVIT_SEED")) {
      KeyValues kv;
      kv.set("SGDVIT_SEED", std::string(s));
      seed = kv.get<std::uint64_t>("SGDVIT_SEED", seed);
      finalize();
    }
  }

  /// Range checks on every numeric field.
  void validate() const {
    model.validate();
    train.validate();
    tracker.validate();
    if (backbone_divisor == 0) throw ConfigError("model.backbone_divisor must be >= 1");
    if (!(loss.positive_radius > 0)) throw ConfigError("train.positive_radius must be > 0");
    if (loss.reg_weight < 0) throw ConfigError("train.reg_weight must be >= 0");
  }

  static void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " is not set");
    if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + " does not exist: " + path);
  }
  static void require_dir(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " is not set");
    if (!std::filesystem::is_directory(path)) throw ConfigError(what + " does not exist: " + path);
  }

 private:
  // Derived fields: one seed drives every random stream.
  void finalize() {
    model.backbone = backbone_divisor > 1 ? BackboneConfig::narrow(model.channels, backbone_divisor)
                                          : BackboneConfig::alexnet_like(model.channels);
    model.init_seed = seed;
    train.seed = seed;
    tracker.seed = seed;
    train.context = tracker.context;
  }
};

}  // namespace sgdvit::config
