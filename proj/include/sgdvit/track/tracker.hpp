#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "sgdvit/model/sgdvit.hpp"
#include "sgdvit/track/crop.hpp"
#include "sgdvit/track/loss.hpp"

namespace sgdvit::track {

struct TrackerParams {
  double penalty = 0.3;   // weight of the cosine window in the score
  double size_ema = 0.7;  // weight of the previous size
  double context = 0.5;
  double min_size = 4;    // frame pixels
  std::uint64_t seed = 1;

  void validate() const {
    if (!(penalty >= 0 && penalty <= 1)) throw ConfigError("tracker.penalty must lie in [0, 1]");
    if (!(size_ema >= 0 && size_ema < 1)) throw ConfigError("tracker.size_ema must lie in [0, 1)");
    if (!(context >= 0)) throw ConfigError("tracker.context must be >= 0");
  }
};

/// Template and search windows for a target box.
inline CropWindow template_window(const BBox& b, const BackboneConfig& bb, double context) {
  return {b.cx, b.cy, context_side(b.w, b.h, context), bb.template_size};
}
inline CropWindow search_window(const BBox& b, const BackboneConfig& bb, double context) {
  const double sz = context_side(b.w, b.h, context);
  return {b.cx, b.cy, sz * double(bb.search_size) / double(bb.template_size), bb.search_size};
}

inline GridBox frame_to_grid(const BBox& b, const CropWindow& win, const model::GridFrame& g) {
  const auto c = win.to_crop(b);
  return {g.to_grid(c.cx), g.to_grid(c.cy), c.w / g.step, c.h / g.step};
}
inline BBox grid_to_frame(const GridBox& b, const CropWindow& win, const model::GridFrame& g) {
  return win.to_frame({g.to_crop(b.cx), g.to_crop(b.cy), b.w * g.step, b.h * g.step});
}

/// Separable Hann window, exactly symmetric so mirrored cells tie.
inline std::vector<double> hann_window(std::size_t G) {
  std::vector<double> h(G, 1.0);
  if (G > 1)
    for (std::size_t i = 0; i <= (G - 1) / 2; ++i) {
      h[i] = 0.5 - 0.5 * std::cos(6.283185307179586 * double(i) / double(G - 1));
      h[G - 1 - i] = h[i];
    }
  std::vector<double> w(G * G);
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = 0; j < G; ++j) w[i * G + j] = h[i] * h[j];
  return w;
}

/// (1 - penalty) * sigmoid(cls) + penalty * hann.
template <class T>
std::vector<double> penalized_scores(const Tensor<T>& cls, double penalty) {
  const std::size_t G = cls.dim(cls.rank() - 1);
  const auto hann = hann_window(G);
  std::vector<double> s(G * G);
  for (std::size_t i = 0; i < G * G; ++i)
    s[i] = (1 - penalty) / (1 + std::exp(-double(cls[i]))) + penalty * hann[i];
  return s;
}

/// Index of the first maximum in row-major order.
inline std::size_t argmax_first(const std::vector<double>& s) {
  return std::size_t(std::max_element(s.begin(), s.end()) - s.begin());
}

template <class T>
struct TrackResult {
  BBox box;
  double confidence = 0;
  std::size_t row = 0, col = 0;  // selected grid cell
  std::size_t n_tokens = 0, k_fine = 0;
  Tensor<T> saliency_map;
};

template <class T>
struct TrackerState {
  model::TemplateEncoding<T> templ;  // frozen after init
  BBox box;
  std::size_t frame_index = 0;
  std::size_t frame_width = 0, frame_height = 0;
};

/// One-pass tracker: template from the first frame, then per frame a search
/// crop around the previous box, a forward pass, a penalized argmax and a
/// size update.
template <class T>
class Tracker {
 public:
  Tracker(const model::SgdVit<T>& net, TrackerParams params) : net_(net), params_(params) { params_.validate(); }

  void init(const Image& frame, const BBox& box) {
    if (!box.valid() || box.area() <= 0) throw DataError("tracker init: degenerate box");
    if (box.cx < 0 || box.cy < 0 || box.cx > double(frame.width) || box.cy > double(frame.height))
      throw DataError("tracker init: box center outside the frame");
    const auto win = template_window(box, net_.config().backbone, params_.context);
    TrackerState<T> st;
    st.templ = net_.encode_template(crop_image<T>(frame, win));
    st.box = box;
    st.frame_index = 0;
    st.frame_width = frame.width;
    st.frame_height = frame.height;
    state_ = std::move(st);
  }

  TrackResult<T> track(const Image& frame) {
    if (!state_) throw Error("tracker: track() called before init()");
    auto& st = *state_;
    ++st.frame_index;
    const auto win = search_window(st.box, net_.config().backbone, params_.context);
    model::ForwardOptions opt;
    opt.gumbel_seed = frame_seed(st.frame_index);
    const auto out = net_.forward_search(st.templ, crop_image<T>(frame, win), opt);

    const auto scores = penalized_scores(out.heads.cls, params_.penalty);
    const std::size_t G = out.heads.cls.dim(1), cell = argmax_first(scores);
    const std::size_t row = cell / G, col = cell % G;
    const auto& reg = out.heads.reg;
    const double l = reg[0 * G * G + cell], t = reg[1 * G * G + cell], r = reg[2 * G * G + cell],
                 b = reg[3 * G * G + cell];
    const GridBox gb{double(col) + (r - l) / 2, double(row) + (b - t) / 2, l + r, t + b};
    auto pred = grid_to_frame(gb, win, net_.grid_frame());

    BBox next;
    next.cx = std::clamp(pred.cx, 0.0, double(frame.width));
    next.cy = std::clamp(pred.cy, 0.0, double(frame.height));
    const double ema = params_.size_ema;
    next.w = std::clamp(ema * st.box.w + (1 - ema) * pred.w, params_.min_size, double(frame.width));
    next.h = std::clamp(ema * st.box.h + (1 - ema) * pred.h, params_.min_size, double(frame.height));
    st.box = next;

    TrackResult<T> res;
    res.box = next;
    res.confidence = 1 / (1 + std::exp(-double(out.heads.cls[cell])));
    res.row = row;
    res.col = col;
    res.n_tokens = out.n_tokens;
    res.k_fine = out.k_fine;
    res.saliency_map = out.saliency_map;
    return res;
  }

  const std::optional<TrackerState<T>>& state() const { return state_; }
  const TrackerParams& params() const { return params_; }

 private:
  std::uint64_t frame_seed(std::size_t index) const {
    Rng r(params_.seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return r();
  }

  const model::SgdVit<T>& net_;
  TrackerParams params_;
  std::optional<TrackerState<T>> state_;
};

}  // namespace sgdvit::track
