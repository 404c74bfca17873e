#pragma once

#include <array>
#include <cmath>

#include "sgdvit/core/tensor.hpp"
#include "sgdvit/data/image.hpp"
#include "sgdvit/data/sequence.hpp"

namespace sgdvit::track {

using data::BBox;
using data::Image;

/// Square crop side around a target: s = sqrt((w + p)(h + p)), p = ctx (w + h).
inline double context_side(double w, double h, double context = 0.5) {
  const double p = context * (w + h);
  return std::sqrt((w + p) * (h + p));
}

/// Square region of a frame resampled to out_size x out_size pixels.
struct CropWindow {
  double cx, cy;  // frame coordinates of the crop center
  double side;    // frame pixels covered
  std::size_t out_size;

  double scale() const { return double(out_size) / side; }  // crop pixels per frame pixel
  double to_crop_x(double fx) const { return (fx - cx) * scale() + 0.5 * double(out_size); }
  double to_crop_y(double fy) const { return (fy - cy) * scale() + 0.5 * double(out_size); }
  double to_frame_x(double x) const { return cx + (x - 0.5 * double(out_size)) / scale(); }
  double to_frame_y(double y) const { return cy + (y - 0.5 * double(out_size)) / scale(); }

  BBox to_crop(const BBox& b) const { return {to_crop_x(b.cx), to_crop_y(b.cy), b.w * scale(), b.h * scale()}; }
  BBox to_frame(const BBox& b) const {
    return {to_frame_x(b.cx), to_frame_y(b.cy), b.w / scale(), b.h / scale()};
  }
};

// Standardization applied to every crop channel after scaling to [0, 1].
inline constexpr std::array<double, 3> kPixelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kPixelStd{0.229, 0.224, 0.225};

struct CropResult {
  double padded_fraction = 0;  // share of output samples that fell outside the frame
};

/// Bilinear crop as a standardized 3 x S x S tensor. Samples outside the frame
/// read the per-channel frame mean.
template <class T>
Tensor<T> crop_image(const Image& img, const CropWindow& win, CropResult* info = nullptr) {
  const std::size_t S = win.out_size, W = img.width, H = img.height;
  const auto mean = img.channel_mean();
  Tensor<T> out(Shape{3, S, S});
  std::size_t padded = 0;
  auto pixel = [&](long x, long y, std::size_t c) {
    return (x < 0 || y < 0 || x >= long(W) || y >= long(H)) ? mean[c] : double(img.at(std::size_t(x), std::size_t(y), c));
  };
  for (std::size_t i = 0; i < S; ++i) {
    const double fy = win.to_frame_y(double(i) + 0.5);
    const double sy = fy - 0.5;
    const long y0 = long(std::floor(sy));
    const double ay = sy - double(y0);
    for (std::size_t j = 0; j < S; ++j) {
      const double fx = win.to_frame_x(double(j) + 0.5);
      if (fx < 0 || fy < 0 || fx >= double(W) || fy >= double(H)) ++padded;
      const double sx = fx - 0.5;
      const long x0 = long(std::floor(sx));
      const double ax = sx - double(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1 - ay) * ((1 - ax) * pixel(x0, y0, c) + ax * pixel(x0 + 1, y0, c)) +
                         ay * ((1 - ax) * pixel(x0, y0 + 1, c) + ax * pixel(x0 + 1, y0 + 1, c));
        out[(c * S + i) * S + j] = T((v / 255.0 - kPixelMean[c]) / kPixelStd[c]);
      }
    }
  }
  if (info) info->padded_fraction = double(padded) / double(S * S);
  return out;
}

}  // namespace sgdvit::track
