#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgdvit/core/optim.hpp"
#include "sgdvit/data/sequence.hpp"
#include "sgdvit/track/tracker.hpp"

namespace sgdvit::track {

struct TrainConfig {
  std::size_t iterations = 200;
  std::size_t samples = 4;  // search crops averaged per update
  double lr_start = 0.02, lr_end = 0.001;  // geometric decay between the two
  double momentum = 0.9;
  double grad_clip = 10.0;  // global gradient norm, 0 disables
  double jitter = 0.2;      // search center shift, fraction of box size
  double scale_jitter = 0.1;  // log-uniform search scale change
  double context = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (samples == 0) throw ConfigError("train.samples must be >= 1");
    if (!(lr_start > 0 && lr_end > 0)) throw ConfigError("train: learning rates must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
    if (jitter < 0 || scale_jitter < 0) throw ConfigError("train: jitter must be >= 0");
  }
};

struct TrainLog {
  std::vector<double> loss, cls, reg, lr;
  std::size_t no_positive_steps = 0;

  /// Mean loss over the first / last `n` iterations.
  double initial_mean(std::size_t n = 10) const { return mean(0, std::min(n, loss.size())); }
  double final_mean(std::size_t n = 10) const {
    return mean(loss.size() - std::min(n, loss.size()), loss.size());
  }

 private:
  double mean(std::size_t a, std::size_t b) const {
    if (a >= b) return 0;
    double s = 0;
    for (std::size_t i = a; i < b; ++i) s += loss[i];
    return s / double(b - a);
  }
};

/// One training sample: template from frame 0, search crop from a random
/// annotated frame around a jittered copy of its ground truth.
struct TrainSample {
  std::size_t frame;
  CropWindow search;
  GridBox target;
  std::uint64_t gumbel_seed;
};

template <class T>
TrainSample draw_sample(const model::SgdVit<T>& net, const data::Sequence& seq, const TrainConfig& cfg, Rng& rng) {
  const std::size_t t = std::size_t(rng.below(seq.boxes.size()));
  const auto& gt = seq.boxes[t];
  BBox center = gt;
  center.cx += cfg.jitter * gt.w * rng.uniform(-1, 1);
  center.cy += cfg.jitter * gt.h * rng.uniform(-1, 1);
  const double s = std::exp(cfg.scale_jitter * rng.uniform(-1, 1));
  center.w *= s;
  center.h *= s;
  const auto win = search_window(center, net.config().backbone, cfg.context);
  return {t, win, frame_to_grid(gt, win, net.grid_frame()), rng()};
}

/// Overfits `net` on one sequence with SGD + momentum. `on_step(i, loss)` is
/// called after every update. Throws NumericalError on a non-finite loss.
template <class T>
TrainLog train_toy(model::SgdVit<T>& net, const data::Sequence& seq, const TrainConfig& cfg,
                   const LossOptions& loss_opt = {},
                   const std::function<void(std::size_t, double)>& on_step = {}) {
  cfg.validate();
  if (seq.frames.empty() || seq.boxes.empty()) throw DataError("train-toy: empty sequence");
  if (seq.boxes.size() > seq.frames.size()) throw DataError("train-toy: more boxes than frames");
  const auto params = net.params();
  OptimizerState<T> opt;
  opt.momentum = cfg.momentum;
  Rng rng(cfg.seed);

  const auto twin = template_window(seq.boxes[0], net.config().backbone, cfg.context);
  const auto template_crop = crop_image<T>(seq.frames[0], twin);

  TrainLog log;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    double total = 0, cls = 0, reg = 0;
    std::size_t no_pos = 0;
    {
      GradTape<T> tape;
      const auto templ = net.encode_template(template_crop);
      Tensor<T> sum;
      for (std::size_t k = 0; k < cfg.samples; ++k) {
        const auto sample = draw_sample(net, seq, cfg, rng);
        model::ForwardOptions fo;
        fo.gumbel_seed = sample.gumbel_seed;
        const auto out = net.forward_search(templ, crop_image<T>(seq.frames[sample.frame], sample.search), fo);
        const auto terms = toy_loss(out.heads, sample.target, loss_opt);
        total += double(terms.total[0]);
        cls += double(terms.cls[0]);
        if (terms.no_positives) ++no_pos;
        else reg += double(terms.reg[0]);
        sum = k == 0 ? terms.total : ops::add(sum, terms.total);
      }
      const double n = double(cfg.samples);
      total /= n;
      cls /= n;
      reg /= n;
      if (!std::isfinite(total))
        throw NumericalError("train-toy: non-finite loss at iteration " + std::to_string(it));
      tape.backward(cfg.samples == 1 ? sum : ops::scale(sum, T(1 / n)));
    }
    fill_missing_grads(params);
    if (cfg.grad_clip > 0) clip_grad_norm(params, cfg.grad_clip);
    opt.learning_rate = log_space_lr(cfg.lr_start, cfg.lr_end, it, cfg.iterations);
    sgd_step(params, opt);

    log.loss.push_back(total);
    log.cls.push_back(cls);
    log.reg.push_back(reg);
    log.lr.push_back(opt.learning_rate);
    log.no_positive_steps += no_pos;
    if (on_step) on_step(it, log.loss.back());
  }
  return log;
}

}  // namespace sgdvit::track
