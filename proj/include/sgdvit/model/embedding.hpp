#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/nn/layers.hpp"

namespace sgdvit::model {

/// Binarized saliency mask on the G x G grid.
template <class T>
struct BinaryMask {
  Tensor<T> hard;  // G x G, forward values exactly 0 or 1; gradients flow to `keep`
  Tensor<T> keep;  // soft keep probabilities in (0, 1); drop = 1 - keep
  double tau = 1.0;
  std::uint64_t seed = 0;

  std::size_t grid() const { return hard.dim(0); }
};

/// Two-way Gumbel-Softmax over logits (m, -m) per cell with a hard
/// (straight-through) forward value. The map is first resampled to grid x grid.
///
/// keep = sigmoid((2m + g_keep - g_drop) / tau), the two-class softmax written
/// as a sigmoid; the logit is clamped to +-15 so keep stays strictly inside
/// (0, 1) even in single precision. hard = [keep >= 1/2].
template <class T>
BinaryMask<T> gumbel_binarize(const Tensor<T>& map, std::size_t grid, double tau, std::uint64_t seed) {
  if (!(tau > 0)) throw ConfigError("gumbel_binarize: temperature must be > 0");
  Tensor<T> m = map;
  if (m.rank() == 2) m = ops::reshape(m, Shape{1, m.dim(0), m.dim(1)});
  if (m.rank() != 3 || m.dim(0) != 1)
    throw ShapeError("gumbel_binarize: expected a single-channel map, got " + map.shape().str());
  if (m.dim(1) != grid || m.dim(2) != grid) m = ops::resize_bilinear(m, grid, grid);
  m = ops::reshape(m, Shape{grid, grid});

  Rng rng(seed);
  Tensor<T> noise(Shape{grid, grid});
  for (std::size_t i = 0; i < noise.numel(); ++i) {
    const double g_keep = rng.gumbel();
    const double g_drop = rng.gumbel();
    noise[i] = T(g_keep - g_drop);
  }
  auto logit = ops::scale(ops::add(ops::scale(m, T(2)), noise), T(1.0 / tau));
  auto keep = ops::sigmoid(ops::clamp(logit, T(-15), T(15)));
  std::vector<T> hard(keep.numel());
  for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = keep[i] >= T(0.5) ? T(1) : T(0);
  return {ops::straight_through(std::move(hard), keep), keep, tau, seed};
}

/// Per-window occupancy of the binary mask and the resulting level decisions.
template <class T>
struct WindowDecisions {
  std::size_t grid = 0, window = 0;
  std::vector<double> occupancy;  // mean of mask values per window, row-major
  std::vector<bool> fine;
  Tensor<T> score;  // differentiable occupancy (W_n), undefined when forced

  std::size_t windows_per_side() const { return grid / window; }
  std::size_t count() const { return fine.size(); }
  std::size_t fine_count() const {
    std::size_t k = 0;
    for (bool f : fine) k += f;
    return k;
  }
};

/// Splits the mask into window x window blocks; a block becomes FINE when its
/// mean occupancy is at least theta.
template <class T>
WindowDecisions<T> partition_and_score(const Tensor<T>& mask, std::size_t window, double theta) {
  if (mask.rank() != 2 || mask.dim(0) != mask.dim(1))
    throw ShapeError("partition_and_score: expected a square mask, got " + mask.shape().str());
  const std::size_t grid = mask.dim(0);
  if (window == 0 || grid % window != 0)
    throw ConfigError("partition_and_score: grid " + std::to_string(grid) +
                      " not divisible by window " + std::to_string(window));
  const std::size_t per_side = grid / window, cells = window * window;
  WindowDecisions<T> d;
  d.grid = grid;
  d.window = window;
  std::vector<std::size_t> index;
  index.reserve(grid * grid);
  for (std::size_t wr = 0; wr < per_side; ++wr)
    for (std::size_t wc = 0; wc < per_side; ++wc) {
      double total = 0;
      for (std::size_t dy = 0; dy < window; ++dy)
        for (std::size_t dx = 0; dx < window; ++dx) {
          const std::size_t idx = (wr * window + dy) * grid + wc * window + dx;
          total += double(mask[idx]);
          index.push_back(idx);
        }
      const double mean = total / double(cells);
      d.occupancy.push_back(mean);
      d.fine.push_back(mean >= theta);
    }
  d.score = ops::mean(ops::gather(mask, std::move(index), Shape{per_side * per_side, cells}), 1);
  return d;
}

/// Decisions with exactly `k` FINE windows (the first k in row-major order).
template <class T>
WindowDecisions<T> forced_decisions(std::size_t grid, std::size_t window, std::size_t k) {
  if (window == 0 || grid % window != 0) throw ConfigError("forced_decisions: grid not divisible by window");
  WindowDecisions<T> d;
  d.grid = grid;
  d.window = window;
  const std::size_t n = (grid / window) * (grid / window);
  if (k > n) throw ConfigError("forced_decisions: k exceeds window count");
  for (std::size_t i = 0; i < n; ++i) {
    d.fine.push_back(i < k);
    d.occupancy.push_back(i < k ? 1.0 : 0.0);
  }
  return d;
}

enum class TokenLevel : std::uint8_t { Coarse, Fine };

struct TokenOrigin {
  std::size_t window_row, window_col;
  TokenLevel level;
  std::size_t sub;  // 0..3 for fine tokens (row-major 2 x 2), 0 for coarse
};

/// Variable-length token matrix plus spatial provenance per row.
template <class T>
struct TokenSet {
  Tensor<T> tokens;  // N_t x C
  std::vector<TokenOrigin> origins;
  std::size_t grid = 0, window = 0;

  std::size_t size() const { return origins.size(); }

  struct Footprint {
    std::size_t y0, x0, extent;
  };
  Footprint footprint(std::size_t i) const { return footprint_of(origins[i], window); }

  static Footprint footprint_of(const TokenOrigin& o, std::size_t window) {
    if (o.level == TokenLevel::Coarse) return {o.window_row * window, o.window_col * window, window};
    const std::size_t half = window / 2;
    return {o.window_row * window + (o.sub / 2) * half, o.window_col * window + (o.sub % 2) * half, half};
  }

  /// Number of tokens covering each grid cell (row-major G x G).
  std::vector<int> coverage() const {
    std::vector<int> cov(grid * grid, 0);
    for (const auto& o : origins) {
      const auto f = footprint_of(o, window);
      for (std::size_t y = f.y0; y < f.y0 + f.extent; ++y)
        for (std::size_t x = f.x0; x < f.x0 + f.extent; ++x) ++cov.at(y * grid + x);
    }
    return cov;
  }

  /// Footprint centers (y, x) in grid-cell units.
  std::vector<std::pair<double, double>> centers() const {
    std::vector<std::pair<double, double>> c;
    for (const auto& o : origins) {
      const auto f = footprint_of(o, window);
      c.emplace_back(double(f.y0) + 0.5 * double(f.extent), double(f.x0) + 0.5 * double(f.extent));
    }
    return c;
  }
};

/// Separate linear projections for coarse (w x w x C) and fine
/// ((w/2) x (w/2) x C) patches into C_tok-dimensional tokens.
template <class T>
struct EmbedWeights {
  Tensor<T> coarse, fine;

  EmbedWeights() = default;
  EmbedWeights(std::size_t channels, std::size_t window, std::size_t token_dim, Rng& rng) {
    const std::size_t cin = window * window * channels, fin = (window / 2) * (window / 2) * channels;
    coarse = kaiming_uniform<T>(Shape{cin, token_dim}, cin, rng);
    fine = kaiming_uniform<T>(Shape{fin, token_dim}, fin, rng);
  }

  ParamSet<T> params() const {
    ParamSet<T> p;
    p.add("coarse", coarse);
    p.add("fine", fine);
    return p;
  }
};

struct EmbedOptions {
  bool positional_encoding = true;
  // Multiply each token by a level gate whose forward value is exactly 1 and
  // whose gradient is that of the window occupancy (fine) or its complement
  // (coarse). Requires decisions.score.
  bool straight_through = true;
};

/// Coarse windows become one token, fine windows four (2 x 2 sub-patches).
/// Tokens are ordered row-major by window, then by sub-index.
template <class T>
TokenSet<T> embed_tokens(const Tensor<T>& feat, const WindowDecisions<T>& decisions,
                         const EmbedWeights<T>& weights, const EmbedOptions& opt = {}) {
  const std::size_t grid = decisions.grid, window = decisions.window;
  if (feat.rank() != 3 || feat.dim(1) != grid || feat.dim(2) != grid)
    throw ShapeError("embed_tokens: features " + feat.shape().str() + " do not match grid " +
                     std::to_string(grid));
  const std::size_t C = feat.dim(0), per_side = grid / window, half = window / 2;
  if (decisions.count() != per_side * per_side)
    throw ShapeError("embed_tokens: decisions do not cover every window");
  if (weights.coarse.dim(0) != window * window * C || weights.fine.dim(0) != half * half * C)
    throw ShapeError("embed_tokens: projection sizes do not match window " + std::to_string(window) +
                     " and " + std::to_string(C) + " channels");

  TokenSet<T> set;
  set.grid = grid;
  set.window = window;
  auto patch = [&](std::size_t y0, std::size_t x0, std::size_t extent, std::vector<std::size_t>& idx) {
    for (std::size_t dy = 0; dy < extent; ++dy)
      for (std::size_t dx = 0; dx < extent; ++dx)
        for (std::size_t c = 0; c < C; ++c) idx.push_back((c * grid + y0 + dy) * grid + x0 + dx);
  };
  std::vector<std::size_t> coarse_idx, fine_idx;
  std::vector<std::pair<bool, std::size_t>> order;  // (is_fine, row within its level)
  std::vector<std::size_t> gate_src;                // index into [score, 1 - score]
  std::size_t n_coarse = 0, n_fine = 0;
  for (std::size_t wr = 0; wr < per_side; ++wr)
    for (std::size_t wc = 0; wc < per_side; ++wc) {
      const std::size_t w = wr * per_side + wc;
      if (decisions.fine[w]) {
        for (std::size_t s = 0; s < 4; ++s) {
          TokenOrigin o{wr, wc, TokenLevel::Fine, s};
          const auto f = TokenSet<T>::footprint_of(o, window);
          patch(f.y0, f.x0, half, fine_idx);
          set.origins.push_back(o);
          order.emplace_back(true, n_fine++);
          gate_src.push_back(w);
        }
      } else {
        patch(wr * window, wc * window, window, coarse_idx);
        set.origins.push_back({wr, wc, TokenLevel::Coarse, 0});
        order.emplace_back(false, n_coarse++);
        gate_src.push_back(per_side * per_side + w);
      }
    }

  std::vector<Tensor<T>> parts;
  if (n_coarse)
    parts.push_back(ops::matmul(
        ops::gather(feat, std::move(coarse_idx), Shape{n_coarse, window * window * C}, "window_partition"),
        weights.coarse));
  if (n_fine)
    parts.push_back(ops::matmul(
        ops::gather(feat, std::move(fine_idx), Shape{n_fine, half * half * C}, "window_partition"),
        weights.fine));
  const std::size_t D = weights.coarse.dim(1);
  auto stacked = parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
  std::vector<std::size_t> rows;
  rows.reserve(order.size() * D);
  for (const auto& [is_fine, r] : order) {
    const std::size_t row = is_fine ? n_coarse + r : r;
    for (std::size_t c = 0; c < D; ++c) rows.push_back(row * D + c);
  }
  auto tokens = ops::gather(stacked, std::move(rows), Shape{order.size(), D}, "token_order");

  if (opt.straight_through && decisions.score.defined()) {
    auto complement = ops::add_scalar(ops::scale(decisions.score, T(-1)), T(1));
    auto src = ops::concat(std::vector<Tensor<T>>{decisions.score, complement}, 0);
    auto surrogate = ops::gather(src, std::move(gate_src), Shape{order.size(), 1}, "token_gate");
    auto gate = ops::straight_through(std::vector<T>(order.size(), T(1)), surrogate);
    tokens = ops::mul(tokens, gate);
  }
  if (opt.positional_encoding) tokens = ops::add(tokens, nn::sinusoidal_2d<T>(set.centers(), D, double(grid)));
  set.tokens = tokens;
  return set;
}

/// Broadcasts every token over its footprint: N_t x C -> C x G x G. The
/// footprints must tile the grid exactly once.
template <class T>
Tensor<T> detokenize(const Tensor<T>& tokens, const TokenSet<T>& layout) {
  if (tokens.rank() != 2 || tokens.dim(0) != layout.size())
    throw ShapeError("detokenize: " + tokens.shape().str() + " does not match " +
                     std::to_string(layout.size()) + " token origins");
  const std::size_t G = layout.grid, C = tokens.dim(1);
  std::vector<std::size_t> owner(G * G, SIZE_MAX);
  for (std::size_t t = 0; t < layout.size(); ++t) {
    const auto f = layout.footprint(t);
    for (std::size_t y = f.y0; y < f.y0 + f.extent; ++y)
      for (std::size_t x = f.x0; x < f.x0 + f.extent; ++x) {
        if (y >= G || x >= G) throw ShapeError("detokenize: footprint outside the grid");
        if (owner[y * G + x] != SIZE_MAX) throw ShapeError("detokenize: overlapping token footprints");
        owner[y * G + x] = t;
      }
  }
  std::vector<std::size_t> index(C * G * G);
  for (std::size_t cell = 0; cell < G * G; ++cell) {
    if (owner[cell] == SIZE_MAX) throw ShapeError("detokenize: grid cell not covered by any token");
    for (std::size_t c = 0; c < C; ++c) index[c * G * G + cell] = owner[cell] * C + c;
  }
  return ops::gather(tokens, std::move(index), Shape{C, G, G}, "detokenize");
}

}  // namespace sgdvit::model
