#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sgdvit/model/heads.hpp"

namespace sgdvit::track {

/// Target box in head-grid units: cell (i, j) is centered at (y, x) = (i, j).
struct GridBox {
  double cx, cy, w, h;
};

template <class T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> cls;
  Tensor<T> reg;  // undefined without positive cells
  std::size_t positives = 0;
  bool no_positives = false;  // box outside the grid: classification term only
};

struct LossOptions {
  double positive_radius = 0.3;  // fraction of the box width / height
  double reg_weight = 2.0;
};

/// Positive cells: inside the centered ellipse with radii r * w and r * h,
/// plus the cell nearest the box center when it lies on the grid.
inline std::vector<bool> positive_cells(std::size_t G, const GridBox& box, double radius = 0.3) {
  std::vector<bool> pos(G * G, false);
  const double rx = radius * box.w, ry = radius * box.h;
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = 0; j < G; ++j) {
      const double dx = (double(j) - box.cx) / rx, dy = (double(i) - box.cy) / ry;
      pos[i * G + j] = dx * dx + dy * dy <= 1.0;
    }
  const double gmax = double(G) - 0.5;
  if (box.cx >= -0.5 && box.cx < gmax && box.cy >= -0.5 && box.cy < gmax) {
    const auto ni = std::size_t(std::lround(std::clamp(box.cy, 0.0, double(G - 1))));
    const auto nj = std::size_t(std::lround(std::clamp(box.cx, 0.0, double(G - 1))));
    pos[ni * G + nj] = true;
  }
  return pos;
}

/// Balanced BCE on cls (half weight on positives, half on negatives) plus
/// the mean IoU loss of the (l, t, r, b) distances over positive cells:
/// total = cls + reg_weight * reg.
template <class T>
LossTerms<T> toy_loss(const model::HeadOutputs<T>& out, const GridBox& box, const LossOptions& opt = {}) {
  const auto& cls = out.cls;
  if (cls.rank() != 3 || cls.dim(0) != 1 || cls.dim(1) != cls.dim(2))
    throw ShapeError("toy_loss: cls must be 1 x G x G, got " + cls.shape().str());
  const std::size_t G = cls.dim(1);
  if (!(out.reg.shape() == Shape{4, G, G})) throw ShapeError("toy_loss: reg must be 4 x G x G");
  const auto pos = positive_cells(G, box, opt.positive_radius);
  std::size_t npos = 0;
  for (bool p : pos) npos += p;
  const std::size_t nneg = G * G - npos;

  Tensor<T> targets(cls.shape()), weights(cls.shape());
  for (std::size_t i = 0; i < G * G; ++i) {
    targets[i] = pos[i] ? T(1) : T(0);
    if (pos[i]) weights[i] = T(0.5 / double(npos));
    else weights[i] = nneg ? T((npos ? 0.5 : 1.0) / double(nneg)) : T(0);
  }
  if (npos && !nneg)
    for (std::size_t i = 0; i < G * G; ++i) weights[i] = T(1.0 / double(npos));

  LossTerms<T> terms;
  terms.positives = npos;
  terms.cls = ops::sum(ops::mul(ops::bce_with_logits(cls, targets), weights));
  if (!npos) {
    terms.no_positives = true;
    terms.total = terms.cls;
    return terms;
  }

  // gather predicted distances at positive cells: 4 rows of npos values
  std::vector<std::size_t> index;
  Tensor<T> target(Shape{4, npos});
  for (std::size_t k = 0; k < 4; ++k) {
    std::size_t n = 0;
    for (std::size_t cell = 0; cell < G * G; ++cell) {
      if (!pos[cell]) continue;
      index.push_back(k * G * G + cell);
      const double gx = double(cell % G), gy = double(cell / G);
      const double d[4] = {gx - (box.cx - box.w / 2), gy - (box.cy - box.h / 2), box.cx + box.w / 2 - gx,
                           box.cy + box.h / 2 - gy};
      target[k * npos + n++] = T(std::max(d[k], 0.0));
    }
  }
  auto pred = ops::gather(out.reg, std::move(index), Shape{4, npos});
  auto row = [](const Tensor<T>& t, std::size_t r) { return ops::slice(t, 0, r, 1); };
  auto pl = row(pred, 0), pt = row(pred, 1), pr = row(pred, 2), pb = row(pred, 3);
  auto tl = row(target, 0), tt = row(target, 1), tr = row(target, 2), tb = row(target, 3);
  auto area_p = ops::mul(ops::add(pl, pr), ops::add(pt, pb));
  auto area_t = ops::mul(ops::add(tl, tr), ops::add(tt, tb));
  auto inter = ops::mul(ops::add(ops::minimum(pl, tl), ops::minimum(pr, tr)),
                        ops::add(ops::minimum(pt, tt), ops::minimum(pb, tb)));
  auto uni = ops::add_scalar(ops::sub(ops::add(area_p, area_t), inter), T(1e-9));
  auto iou = ops::div(inter, uni);
  terms.reg = ops::scale(ops::sum(ops::add_scalar(ops::scale(iou, T(-1)), T(1))), T(1.0 / double(npos)));
  terms.total = ops::add(terms.cls, ops::scale(terms.reg, T(opt.reg_weight)));
  return terms;
}

}  // namespace sgdvit::track
