#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sgdvit/config/keyvalue.hpp"
#include "sgdvit/core/rng.hpp"
#include "sgdvit/data/sequence.hpp"

namespace sgdvit::data {

enum class ObjectKind { Rectangle, Ellipse, Textured };
enum class PathKind { Static, Linear, Sinusoidal };

/// Parameters of one synthetic tracking sequence. Intensities are in [0, 1].
struct SynthSpec {
  std::size_t width = 320, height = 240, frames = 20;
  ObjectKind kind = ObjectKind::Textured;
  double base_w = 48, base_h = 48;
  PathKind path = PathKind::Linear;
  double start_x = 110, start_y = 100;  // initial center
  double velocity_x = 3, velocity_y = 1.5;
  double amplitude_x = 40, amplitude_y = 25, period = 20;
  double scale_start = 1, scale_end = 1, scale_min = 0.25, scale_max = 4;
  double aspect_start = 1, aspect_end = 1, aspect_min = 0.25, aspect_max = 4;
  std::size_t clutter = 2;
  double clutter_contrast = 0.2;
  double contrast = 0.2;          // min |object - background| per channel, before noise
  double background = 0.5;
  double background_texture = 0.05;  // amplitude of the smooth background pattern
  std::size_t texture_cells = 6;
  double noise = 0.02;
  std::uint64_t seed = 1;

  /// Linear interpolation from start to end over the sequence.
  double scale(std::size_t t) const { return lerp(scale_start, scale_end, t); }
  double aspect(std::size_t t) const { return lerp(aspect_start, aspect_end, t); }

  BBox box(std::size_t t) const {
    const double s = scale(t), a = aspect(t);
    double cx = start_x, cy = start_y;
    switch (path) {
      case PathKind::Static: break;
      case PathKind::Linear:
        cx += velocity_x * double(t);
        cy += velocity_y * double(t);
        break;
      case PathKind::Sinusoidal: {
        const double ph = 6.283185307179586 * double(t) / period;
        cx += amplitude_x * std::sin(ph);
        cy += amplitude_y * std::sin(2 * ph);
        break;
      }
    }
    return {cx, cy, base_w * s * a, base_h * s / a};
  }

  void validate() const {
    if (width < 8 || height < 8 || frames == 0) throw ConfigError("synth: frame size and count must be positive");
    if (!(base_w > 0 && base_h > 0)) throw ConfigError("synth: base size must be positive");
    if (!(contrast > 0 && contrast <= std::min(background, 1 - background)))
      throw ConfigError("synth: contrast must lie in (0, min(background, 1 - background)]");
    if (!(clutter_contrast > 0 && clutter_contrast <= std::min(background, 1 - background)))
      throw ConfigError("synth: clutter_contrast out of range");
    if (background_texture < 0 || background_texture >= contrast)
      throw ConfigError("synth: background_texture must lie in [0, contrast)");
    if (noise < 0) throw ConfigError("synth: noise must be >= 0");
    if (texture_cells == 0) throw ConfigError("synth: texture_cells must be positive");
    if (path == PathKind::Sinusoidal && !(period > 0)) throw ConfigError("synth: period must be positive");
    for (std::size_t t = 0; t < frames; ++t) {
      const double s = scale(t), a = aspect(t);
      if (s < scale_min || s > scale_max || a < aspect_min || a > aspect_max)
        throw ConfigError("synth: scale/aspect trajectory leaves its bounds at frame " + std::to_string(t));
      const auto b = box(t);
      if (b.x() < 0 || b.y() < 0 || b.x() + b.w > double(width) || b.y() + b.h > double(height))
        throw ConfigError("synth: trajectory exits the frame at frame " + std::to_string(t));
    }
  }

  static SynthSpec from(const config::KeyValues& kv, const std::string& p = "synth.") {
    SynthSpec s;
    s.width = kv.get(p + "width", s.width);
    s.height = kv.get(p + "height", s.height);
    s.frames = kv.get(p + "frames", s.frames);
    const auto kind = kv.get<std::string>(p + "object", "textured");
    if (kind == "rectangle") s.kind = ObjectKind::Rectangle;
    else if (kind == "ellipse") s.kind = ObjectKind::Ellipse;
    else if (kind == "textured") s.kind = ObjectKind::Textured;
    else throw ConfigError("synth: unknown object kind '" + kind + "'");
    s.base_w = kv.get(p + "base_w", s.base_w);
    s.base_h = kv.get(p + "base_h", s.base_h);
    const auto path = kv.get<std::string>(p + "path", "linear");
    if (path == "static") s.path = PathKind::Static;
    else if (path == "linear") s.path = PathKind::Linear;
    else if (path == "sinusoidal") s.path = PathKind::Sinusoidal;
    else throw ConfigError("synth: unknown path '" + path + "'");
    s.start_x = kv.get(p + "start_x", s.start_x);
    s.start_y = kv.get(p + "start_y", s.start_y);
    s.velocity_x = kv.get(p + "velocity_x", s.velocity_x);
    s.velocity_y = kv.get(p + "velocity_y", s.velocity_y);
    s.amplitude_x = kv.get(p + "amplitude_x", s.amplitude_x);
    s.amplitude_y = kv.get(p + "amplitude_y", s.amplitude_y);
    s.period = kv.get(p + "period", s.period);
    s.scale_start = kv.get(p + "scale_start", s.scale_start);
    s.scale_end = kv.get(p + "scale_end", s.scale_end);
    s.scale_min = kv.get(p + "scale_min", s.scale_min);
    s.scale_max = kv.get(p + "scale_max", s.scale_max);
    s.aspect_start = kv.get(p + "aspect_start", s.aspect_start);
    s.aspect_end = kv.get(p + "aspect_end", s.aspect_end);
    s.aspect_min = kv.get(p + "aspect_min", s.aspect_min);
    s.aspect_max = kv.get(p + "aspect_max", s.aspect_max);
    s.clutter = kv.get(p + "clutter", s.clutter);
    s.clutter_contrast = kv.get(p + "clutter_contrast", s.clutter_contrast);
    s.contrast = kv.get(p + "contrast", s.contrast);
    s.background = kv.get(p + "background", s.background);
    s.background_texture = kv.get(p + "background_texture", s.background_texture);
    s.texture_cells = kv.get(p + "texture_cells", s.texture_cells);
    s.noise = kv.get(p + "noise", s.noise);
    s.seed = kv.get(p + "seed", s.seed);
    return s;
  }

  void to(config::KeyValues& kv, const std::string& p = "synth.") const {
    static const char* kinds[] = {"rectangle", "ellipse", "textured"};
    static const char* paths[] = {"static", "linear", "sinusoidal"};
    kv.set(p + "width", width);
    kv.set(p + "height", height);
    kv.set(p + "frames", frames);
    kv.set(p + "object", kinds[int(kind)]);
    kv.set(p + "base_w", base_w);
    kv.set(p + "base_h", base_h);
    kv.set(p + "path", paths[int(path)]);
    kv.set(p + "start_x", start_x);
    kv.set(p + "start_y", start_y);
    kv.set(p + "velocity_x", velocity_x);
    kv.set(p + "velocity_y", velocity_y);
    kv.set(p + "amplitude_x", amplitude_x);
    kv.set(p + "amplitude_y", amplitude_y);
    kv.set(p + "period", period);
    kv.set(p + "scale_start", scale_start);
    kv.set(p + "scale_end", scale_end);
    kv.set(p + "scale_min", scale_min);
    kv.set(p + "scale_max", scale_max);
    kv.set(p + "aspect_start", aspect_start);
    kv.set(p + "aspect_end", aspect_end);
    kv.set(p + "aspect_min", aspect_min);
    kv.set(p + "aspect_max", aspect_max);
    kv.set(p + "clutter", clutter);
    kv.set(p + "clutter_contrast", clutter_contrast);
    kv.set(p + "contrast", contrast);
    kv.set(p + "background", background);
    kv.set(p + "background_texture", background_texture);
    kv.set(p + "texture_cells", texture_cells);
    kv.set(p + "noise", noise);
    kv.set(p + "seed", seed);
  }

 private:
  double lerp(double a, double b, std::size_t t) const {
    return frames <= 1 ? a : a + (b - a) * double(t) / double(frames - 1);
  }
};

namespace detail {

// Blocky texture: each cell is an RGB color whose channels all sit on one
// side of the background level, at least `contrast` away from it.
struct Texture {
  std::size_t cells;
  std::vector<double> rgb;

  Texture(std::size_t n, double background, double contrast, Rng& rng) : cells(n), rgb(n * n * 3) {
    for (std::size_t i = 0; i < n * n; ++i) {
      const bool bright = rng.uniform() < 0.5;
      for (std::size_t c = 0; c < 3; ++c) {
        const double u = rng.uniform();
        rgb[i * 3 + c] = bright ? background + contrast + u * (1 - background - contrast)
                                : background - contrast - u * (background - contrast);
      }
    }
  }

  // (u, v) in [0, 1): nearest cell, so no value blends toward the background
  double sample(double u, double v, std::size_t c) const {
    const auto i = std::min(cells - 1, std::size_t(std::max(0.0, v) * double(cells)));
    const auto j = std::min(cells - 1, std::size_t(std::max(0.0, u) * double(cells)));
    return rgb[(i * cells + j) * 3 + c];
  }
};

inline void paint(std::vector<double>& canvas, std::size_t W, std::size_t H, const BBox& b,
                  const Texture& tex, ObjectKind kind) {
  const long x0 = std::max(0L, long(std::floor(b.x()))), x1 = std::min(long(W), long(std::ceil(b.x() + b.w)));
  const long y0 = std::max(0L, long(std::floor(b.y()))), y1 = std::min(long(H), long(std::ceil(b.y() + b.h)));
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      const double u = (px - b.x()) / b.w, v = (py - b.y()) / b.h;
      if (u < 0 || u >= 1 || v < 0 || v >= 1) continue;
      if (kind == ObjectKind::Ellipse && (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) > 0.25) continue;
      for (std::size_t c = 0; c < 3; ++c)
        canvas[(std::size_t(y) * W + std::size_t(x)) * 3 + c] =
            kind == ObjectKind::Textured ? tex.sample(u, v, c) : tex.rgb[c];
    }
}

}  // namespace detail

/// Renders the sequence described by `spec`; identical specs give identical
/// frames. The ground-truth box at frame t has size
/// (base_w * s(t) * a(t), base_h * s(t) / a(t)).
inline Sequence generate_sequence(const SynthSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng tex_rng = root.split(), clutter_rng = root.split(), bg_rng = root.split(), noise_rng = root.split();
  const std::size_t W = spec.width, H = spec.height;
  const detail::Texture object(spec.texture_cells, spec.background, spec.contrast, tex_rng);

  struct Distractor {
    BBox box;
    detail::Texture tex;
  };
  std::vector<Distractor> clutter;
  for (std::size_t i = 0; i < spec.clutter; ++i) {
    const double w = spec.base_w * clutter_rng.uniform(0.6, 1.0), h = spec.base_h * clutter_rng.uniform(0.6, 1.0);
    const double cx = clutter_rng.uniform(w / 2, double(W) - w / 2), cy = clutter_rng.uniform(h / 2, double(H) - h / 2);
    clutter.push_back({{cx, cy, w, h}, detail::Texture(spec.texture_cells, spec.background, spec.clutter_contrast, clutter_rng)});
  }

  // smooth background: bilinear interpolation of a coarse random lattice
  const std::size_t gw = W / 32 + 2, gh = H / 32 + 2;
  std::vector<double> lattice(gw * gh * 3);
  for (auto& v : lattice) v = bg_rng.uniform(-1, 1) * spec.background_texture;
  std::vector<double> background(W * H * 3);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double fy = double(y) / 32, fx = double(x) / 32;
      const std::size_t iy = std::size_t(fy), ix = std::size_t(fx);
      const double ay = fy - double(iy), ax = fx - double(ix);
      for (std::size_t c = 0; c < 3; ++c) {
        auto L = [&](std::size_t yy, std::size_t xx) { return lattice[(yy * gw + xx) * 3 + c]; };
        const double v = (1 - ay) * ((1 - ax) * L(iy, ix) + ax * L(iy, ix + 1)) +
                         ay * ((1 - ax) * L(iy + 1, ix) + ax * L(iy + 1, ix + 1));
        background[(y * W + x) * 3 + c] = spec.background + v;
      }
    }

  Sequence seq;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    auto canvas = background;
    for (const auto& d : clutter) detail::paint(canvas, W, H, d.box, d.tex, ObjectKind::Textured);
    const auto box = spec.box(t);
    detail::paint(canvas, W, H, box, object, spec.kind);
    Image img(W, H);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      const double v = canvas[i] + (spec.noise > 0 ? spec.noise * noise_rng.normal() : 0.0);
      img.rgb[i] = std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255));
    }
    seq.frames.push_back(std::move(img));
    seq.boxes.push_back(box);
  }
  return seq;
}

}  // namespace sgdvit::data
