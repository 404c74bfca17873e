#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sgdvit/core/error.hpp"
#include "sgdvit/data/sequence.hpp"

namespace sgdvit::eval {

using data::BBox;

inline double compute_cle(const BBox& pred, const BBox& gt) { return std::hypot(pred.cx - gt.cx, pred.cy - gt.cy); }

/// Center error with each component divided by the gt width / height.
inline double compute_normalized_cle(const BBox& pred, const BBox& gt) {
  return std::hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h);
}

inline double compute_iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x() + a.w, b.x() + b.w) - std::max(a.x(), b.x());
  const double ih = std::min(a.y() + a.h, b.y() + b.h) - std::max(a.y(), b.y());
  if (iw <= 0 || ih <= 0) return 0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct Curve {
  std::vector<double> thresholds, rates;
  double auc() const {
    double s = 0;
    for (double r : rates) s += r;
    return rates.empty() ? 0 : s / double(rates.size());
  }
};

// Threshold conventions, written into every CSV header.
inline constexpr double kPrecisionThreshold = 20;  // px, pass if cle < t
inline constexpr std::size_t kSuccessSteps = 100;    // t = 0.005, 0.015, ..., 0.995, pass if iou > t
inline constexpr std::size_t kNormSteps = 100;       // t = 0.0025, ..., 0.4975, pass if ncle < t
inline constexpr double kNormMax = 0.5;

inline double fraction_below(const std::vector<double>& v, double t) {
  std::size_t n = 0;
  for (double x : v) n += x < t;
  return double(n) / double(v.size());
}
inline double fraction_above(const std::vector<double>& v, double t) {
  std::size_t n = 0;
  for (double x : v) n += x > t;
  return double(n) / double(v.size());
}

/// Success curve at bin midpoints; its mean is within 0.005 of the mean IoU.
inline Curve success_curve(const std::vector<double>& iou) {
  Curve c;
  for (std::size_t k = 0; k < kSuccessSteps; ++k) {
    const double t = (double(k) + 0.5) / double(kSuccessSteps);
    c.thresholds.push_back(t);
    c.rates.push_back(fraction_above(iou, t));
  }
  return c;
}

/// Precision plot over integer pixel thresholds 0..max_px.
inline Curve precision_curve(const std::vector<double>& cle, std::size_t max_px = 50) {
  Curve c;
  for (std::size_t t = 0; t <= max_px; ++t) {
    c.thresholds.push_back(double(t));
    c.rates.push_back(fraction_below(cle, double(t)));
  }
  return c;
}

inline Curve normalized_precision_curve(const std::vector<double>& ncle) {
  Curve c;
  for (std::size_t k = 0; k < kNormSteps; ++k) {
    const double t = kNormMax * (double(k) + 0.5) / double(kNormSteps);
    c.thresholds.push_back(t);
    c.rates.push_back(fraction_below(ncle, t));
  }
  return c;
}

struct MetricReport {
  std::vector<double> cle, iou, normalized_cle;
  double precision20 = 0;
  double norm_precision = 0;  // AUC of the normalized precision curve
  double success_auc = 0;
  double mean_iou = 0;
  Curve precision, normalized, success;
};

inline MetricReport report(const std::vector<BBox>& preds, const std::vector<BBox>& gts) {
  if (preds.empty() || gts.empty()) throw DataError("eval: empty box list");
  if (preds.size() != gts.size())
    throw DataError("eval: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(gts.size()) +
                    " ground-truth boxes");
  MetricReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!gts[i].valid()) throw DataError("eval: invalid ground-truth box at frame " + std::to_string(i + 1));
    r.cle.push_back(compute_cle(preds[i], gts[i]));
    r.normalized_cle.push_back(compute_normalized_cle(preds[i], gts[i]));
    r.iou.push_back(compute_iou(preds[i], gts[i]));
  }
  r.precision = precision_curve(r.cle);
  r.normalized = normalized_precision_curve(r.normalized_cle);
  r.success = success_curve(r.iou);
  r.precision20 = fraction_below(r.cle, kPrecisionThreshold);
  r.norm_precision = r.normalized.auc();
  r.success_auc = r.success.auc();
  for (double v : r.iou) r.mean_iou += v;
  r.mean_iou /= double(r.iou.size());
  return r;
}

inline const char* kMetricHeader =
    "# precision20 = fraction of frames with cle < 20 px, cle = |pred center - gt center|\n"
    "# norm_precision = mean over t = 0.0025..0.4975 (step 0.005) of fraction with ncle < t,"
    " ncle = |((px - gx) / gw, (py - gy) / gh)|\n"
    "# success_auc = mean over t = 0.005..0.995 (step 0.01) of fraction with iou > t\n"
    "# mean_iou = mean over frames of iou\n";

inline void write_frames_csv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << kMetricHeader << "frame,cle,iou\n";
  char buf[96];
  for (std::size_t i = 0; i < r.cle.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.6f\n", i + 1, r.cle[i], r.iou[i]);
    os << buf;
  }
}

inline std::string summary_csv(const MetricReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", r.precision20, r.norm_precision, r.success_auc, r.mean_iou);
  return std::string(kMetricHeader) + "precision20,norm_precision,success_auc,mean_iou\n" + buf;
}

/// Minimal SVG line plot of one curve, x scaled to [x0, x1], y to [0, 1].
inline std::string curve_svg(const Curve& c, const std::string& title, const std::string& xlabel) {
  const double W = 400, H = 300, m = 40;
  const double x0 = c.thresholds.empty() ? 0 : c.thresholds.front();
  const double x1 = c.thresholds.empty() ? 1 : c.thresholds.back();
  const double span = x1 > x0 ? x1 - x0 : 1;
  std::string pts;
  char buf[64];
  for (std::size_t i = 0; i < c.rates.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", m + (c.thresholds[i] - x0) / span * (W - 2 * m),
                  H - m - c.rates[i] * (H - 2 * m));
    pts += buf;
  }
  std::snprintf(buf, sizeof buf, "%.3f", c.auc());
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"300\">\n"
         "<rect width=\"400\" height=\"300\" fill=\"white\"/>\n"
         "<line x1=\"40\" y1=\"260\" x2=\"360\" y2=\"260\" stroke=\"black\"/>\n"
         "<line x1=\"40\" y1=\"40\" x2=\"40\" y2=\"260\" stroke=\"black\"/>\n"
         "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" + pts + "\"/>\n"
         "<text x=\"200\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" + title + " [" + buf + "]</text>\n"
         "<text x=\"200\" y=\"290\" text-anchor=\"middle\" font-size=\"12\">" + xlabel + "</text>\n"
         "</svg>\n";
}

}  // namespace sgdvit::eval
