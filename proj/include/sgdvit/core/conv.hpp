#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sgdvit/core/ops.hpp"

/// Spatial ops over (N x) C x H x W feature maps. Rank-3 inputs are treated as
/// a batch of one and produce rank-3 outputs.
namespace sgdvit::ops {

/// Stride, zero padding and dilation shared by both spatial axes.
struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

/// floor((n + 2p - d(k-1) - 1) / s) + 1, or nullopt when the kernel does not fit.
inline std::optional<std::size_t> conv_output_size(std::size_t n, std::size_t k,
                                                   const ConvGeometry& g) {
  const std::size_t effective = g.dilation * (k - 1) + 1;
  if (n + 2 * g.padding < effective || g.stride == 0) return std::nullopt;
  return (n + 2 * g.padding - effective) / g.stride + 1;
}

/// (n - 1)s - 2p + d(k-1) + output_padding + 1.
inline std::size_t conv_transpose_output_size(std::size_t n, std::size_t k, const ConvGeometry& g,
                                              std::size_t output_padding = 0) {
  return (n - 1) * g.stride + g.dilation * (k - 1) + output_padding + 1 - 2 * g.padding;
}

namespace detail {

struct Spatial {
  std::size_t batch, channels, height, width;
  bool batched;
};

inline Spatial spatial_of(const char* op, const Shape& s) {
  if (s.rank() == 3) return {1, s[0], s[1], s[2], false};
  if (s.rank() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected C x H x W or N x C x H x W, got " + s.str());
}

inline Shape spatial_shape(const Spatial& like, std::size_t c, std::size_t h, std::size_t w) {
  return like.batched ? Shape{like.batch, c, h, w} : Shape{c, h, w};
}

// Columns of a (channels*kh*kw) x (out_h*out_w) matrix from an image.
template <class T>
void im2col(const T* img, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, const ConvGeometry& g, std::size_t out_h,
            std::size_t out_w, T* col) {
  const std::size_t cols = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = col + ((c * kh + i) * kw + j) * cols;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long y = long(oy * g.stride + i * g.dilation) - long(g.padding);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long x = long(ox * g.stride + j * g.dilation) - long(g.padding);
            row[oy * out_w + ox] = (y >= 0 && y < long(height) && x >= 0 && x < long(width))
                                       ? img[(c * height + y) * width + x]
                                       : T(0);
          }
        }
      }
}

// Adjoint of im2col: accumulates columns back into an image.
template <class T>
void col2im(const T* col, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, const ConvGeometry& g, std::size_t out_h,
            std::size_t out_w, T* img) {
  const std::size_t cols = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        const T* row = col + ((c * kh + i) * kw + j) * cols;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long y = long(oy * g.stride + i * g.dilation) - long(g.padding);
          if (y < 0 || y >= long(height)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long x = long(ox * g.stride + j * g.dilation) - long(g.padding);
            if (x >= 0 && x < long(width)) img[(c * height + y) * width + x] += row[oy * out_w + ox];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation style convolution. weight: O x C x kh x kw; bias: O or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& g = {}) {
  const auto in = detail::spatial_of("conv2d", x.shape());
  if (weight.rank() != 4 || weight.dim(1) != in.channels)
    detail::shape_mismatch("conv2d", x.shape(), weight.shape());
  const std::size_t oc = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (bias.defined() && bias.numel() != oc) detail::shape_mismatch("conv2d", weight.shape(), bias.shape());
  const auto oh = conv_output_size(in.height, kh, g);
  const auto ow = conv_output_size(in.width, kw, g);
  if (!oh || !ow)
    throw ShapeError("conv2d: input " + x.shape().str() + " smaller than effective kernel of " +
                     weight.shape().str());
  const std::size_t H = *oh, W = *ow, ckk = in.channels * kh * kw, hw = H * W;
  const std::size_t in_plane = in.channels * in.height * in.width;
  Tensor<T> out(detail::spatial_shape(in, oc, H, W));
  AlignedBuffer<T> col(ckk * hw);
  for (std::size_t n = 0; n < in.batch; ++n) {
    detail::im2col(x.data().data() + n * in_plane, in.channels, in.height, in.width, kh, kw, g, H, W,
                   col.data());
    detail::MapMat<T> O(out.data().data() + n * oc * hw, oc, hw);
    O.noalias() = detail::CMapMat<T>(weight.data().data(), oc, ckk) *
                  detail::CMapMat<T>(col.data(), ckk, hw);
    if (bias.defined())
      for (std::size_t o = 0; o < oc; ++o) O.row(o).array() += bias[o];
  }
  if (FlopScope::counting()) FlopScope::charge("conv", std::uint64_t(in.batch) * oc * ckk * hw);
  if (GradTape<T>::should_record({&x, &weight, &bias})) {
    auto xi = x.impl(), wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    std::vector<sgdvit::detail::ImplPtr<T>> inputs{xi, wi};
    if (bi) inputs.push_back(bi);
    detail::record("conv2d", out, inputs,
                   [xi, wi, bi, in, oc, kh, kw, g, H, W, ckk, hw, in_plane](std::span<const T> grad) {
                     auto* gx = grad_target(xi);
                     auto* gw = grad_target(wi);
                     auto* gb = bi ? grad_target(bi) : nullptr;
                     AlignedBuffer<T> col(ckk * hw);
                     for (std::size_t n = 0; n < in.batch; ++n) {
                       detail::CMapMat<T> G(grad.data() + n * oc * hw, oc, hw);
                       if (gw) {
                         detail::im2col(xi->data.data() + n * in_plane, in.channels, in.height,
                                        in.width, kh, kw, g, H, W, col.data());
                         detail::MapMat<T>(gw->data(), oc, ckk).noalias() +=
                             G * detail::CMapMat<T>(col.data(), ckk, hw).transpose();
                       }
                       if (gb)
                         for (std::size_t o = 0; o < oc; ++o) (*gb)[o] += G.row(o).sum();
                       if (gx) {
                         detail::MapMat<T>(col.data(), ckk, hw).noalias() =
                             detail::CMapMat<T>(wi->data.data(), oc, ckk).transpose() * G;
                         detail::col2im(col.data(), in.channels, in.height, in.width, kh, kw, g, H,
                                        W, gx->data() + n * in_plane);
                       }
                     }
                   });
  }
  return out;
}

/// Transposed convolution. weight: Cin x Cout x kh x kw; bias: Cout or undefined.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const ConvGeometry& g = {}, std::size_t output_padding = 0) {
  const auto in = detail::spatial_of("conv_transpose2d", x.shape());
  if (weight.rank() != 4 || weight.dim(0) != in.channels)
    detail::shape_mismatch("conv_transpose2d", x.shape(), weight.shape());
  const std::size_t oc = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (bias.defined() && bias.numel() != oc)
    detail::shape_mismatch("conv_transpose2d", weight.shape(), bias.shape());
  const long raw_h = long((in.height - 1) * g.stride + g.dilation * (kh - 1) + output_padding + 1) -
                     long(2 * g.padding);
  const long raw_w = long((in.width - 1) * g.stride + g.dilation * (kw - 1) + output_padding + 1) -
                     long(2 * g.padding);
  if (raw_h <= 0 || raw_w <= 0)
    throw ShapeError("conv_transpose2d: padding too large for input " + x.shape().str());
  const std::size_t H = raw_h, W = raw_w, okk = oc * kh * kw, hw = in.height * in.width;
  const std::size_t in_plane = in.channels * hw, out_plane = oc * H * W;
  Tensor<T> out(detail::spatial_shape(in, oc, H, W));
  AlignedBuffer<T> col(okk * hw);
  for (std::size_t n = 0; n < in.batch; ++n) {
    detail::MapMat<T>(col.data(), okk, hw).noalias() =
        detail::CMapMat<T>(weight.data().data(), in.channels, okk).transpose() *
        detail::CMapMat<T>(x.data().data() + n * in_plane, in.channels, hw);
    T* o = out.data().data() + n * out_plane;
    detail::col2im(col.data(), oc, H, W, kh, kw, g, in.height, in.width, o);
    if (bias.defined())
      for (std::size_t c = 0; c < oc; ++c)
        for (std::size_t i = 0; i < H * W; ++i) o[c * H * W + i] += bias[c];
  }
  if (FlopScope::counting())
    FlopScope::charge("deconv", std::uint64_t(in.batch) * in.channels * okk * hw);
  if (GradTape<T>::should_record({&x, &weight, &bias})) {
    auto xi = x.impl(), wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    std::vector<sgdvit::detail::ImplPtr<T>> inputs{xi, wi};
    if (bi) inputs.push_back(bi);
    detail::record("conv_transpose2d", out, inputs,
                   [xi, wi, bi, in, oc, kh, kw, g, H, W, okk, hw, in_plane,
                    out_plane](std::span<const T> grad) {
                     auto* gx = grad_target(xi);
                     auto* gw = grad_target(wi);
                     auto* gb = bi ? grad_target(bi) : nullptr;
                     AlignedBuffer<T> col(okk * hw);
                     for (std::size_t n = 0; n < in.batch; ++n) {
                       const T* go = grad.data() + n * out_plane;
                       if (gb)
                         for (std::size_t c = 0; c < oc; ++c)
                           for (std::size_t i = 0; i < H * W; ++i) (*gb)[c] += go[c * H * W + i];
                       if (!gx && !gw) continue;
                       detail::im2col(go, oc, H, W, kh, kw, g, in.height, in.width, col.data());
                       detail::CMapMat<T> C(col.data(), okk, hw);
                       if (gx)
                         detail::MapMat<T>(gx->data() + n * in_plane, in.channels, hw).noalias() +=
                             detail::CMapMat<T>(wi->data.data(), in.channels, okk) * C;
                       if (gw)
                         detail::MapMat<T>(gw->data(), in.channels, okk).noalias() +=
                             detail::CMapMat<T>(xi->data.data() + n * in_plane, in.channels, hw) *
                             C.transpose();
                     }
                   });
  }
  return out;
}

/// Depthwise sliding-window correlation, stride 1, no padding:
/// out[c,i,j] = scale * sum_{u,v} search[c,i+u,j+v] * kernel[c,u,v].
template <class T>
Tensor<T> depthwise_xcorr(const Tensor<T>& search, const Tensor<T>& kernel, T scale = T(1)) {
  if (search.rank() != 3 || kernel.rank() != 3 || search.dim(0) != kernel.dim(0))
    detail::shape_mismatch("depthwise_xcorr", search.shape(), kernel.shape());
  const std::size_t C = search.dim(0), Hs = search.dim(1), Ws = search.dim(2);
  const std::size_t Ht = kernel.dim(1), Wt = kernel.dim(2);
  if (Ht > Hs || Wt > Ws)
    throw ShapeError("depthwise_xcorr: template " + kernel.shape().str() + " larger than search " +
                     search.shape().str());
  const std::size_t Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;
  Tensor<T> out(Shape{C, Ho, Wo});
  const T* s = search.data().data();
  const T* k = kernel.data().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        T acc = 0;
        for (std::size_t u = 0; u < Ht; ++u)
          for (std::size_t v = 0; v < Wt; ++v)
            acc += s[(c * Hs + i + u) * Ws + j + v] * k[(c * Ht + u) * Wt + v];
        out[(c * Ho + i) * Wo + j] = scale * acc;
      }
  if (FlopScope::counting()) FlopScope::charge("xcorr", std::uint64_t(C) * Ho * Wo * Ht * Wt);
  if (GradTape<T>::should_record({&search, &kernel})) {
    auto si = search.impl(), ki = kernel.impl();
    detail::record("depthwise_xcorr", out, {si, ki},
                   [si, ki, C, Hs, Ws, Ht, Wt, Ho, Wo, scale](std::span<const T> g) {
                     auto* gs = grad_target(si);
                     auto* gk = grad_target(ki);
                     for (std::size_t c = 0; c < C; ++c)
                       for (std::size_t i = 0; i < Ho; ++i)
                         for (std::size_t j = 0; j < Wo; ++j) {
                           const T go = scale * g[(c * Ho + i) * Wo + j];
                           if (go == T(0)) continue;
                           for (std::size_t u = 0; u < Ht; ++u)
                             for (std::size_t v = 0; v < Wt; ++v) {
                               const std::size_t si_ = (c * Hs + i + u) * Ws + j + v;
                               const std::size_t ki_ = (c * Ht + u) * Wt + v;
                               if (gs) (*gs)[si_] += go * ki->data[ki_];
                               if (gk) (*gk)[ki_] += go * si->data[si_];
                             }
                         }
                   });
  }
  return out;
}

/// Max pooling with a square window and no padding.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  const auto in = detail::spatial_of("max_pool2d", x.shape());
  const auto oh = conv_output_size(in.height, kernel, {stride, 0, 1});
  const auto ow = conv_output_size(in.width, kernel, {stride, 0, 1});
  if (!oh || !ow) throw ShapeError("max_pool2d: input " + x.shape().str() + " smaller than window");
  const std::size_t H = *oh, W = *ow, planes = in.batch * in.channels;
  Tensor<T> out(detail::spatial_shape(in, in.channels, H, W));
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        std::size_t best = (p * in.height + i * stride) * in.width + j * stride;
        for (std::size_t u = 0; u < kernel; ++u)
          for (std::size_t v = 0; v < kernel; ++v) {
            const std::size_t idx = (p * in.height + i * stride + u) * in.width + j * stride + v;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (p * H + i) * W + j;
        arg[o] = best;
        out[o] = x[best];
      }
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    detail::record("max_pool2d", out, {xi}, [xi, arg = std::move(arg)](std::span<const T> g) {
      if (auto* gx = grad_target(xi))
        for (std::size_t o = 0; o < g.size(); ++o) (*gx)[arg[o]] += g[o];
    });
  }
  return out;
}

/// Pads both spatial axes by `pad` cells, repeating the border values.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& x, std::size_t pad) {
  const auto in = detail::spatial_of("pad_replicate", x.shape());
  if (pad == 0) return x;
  const std::size_t H = in.height + 2 * pad, W = in.width + 2 * pad;
  std::vector<std::size_t> index;
  index.reserve(in.batch * in.channels * H * W);
  for (std::size_t p = 0; p < in.batch * in.channels; ++p)
    for (std::size_t i = 0; i < H; ++i) {
      const std::size_t y = std::clamp<long>(long(i) - long(pad), 0, long(in.height) - 1);
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t xx = std::clamp<long>(long(j) - long(pad), 0, long(in.width) - 1);
        index.push_back((p * in.height + y) * in.width + xx);
      }
    }
  return gather(x, std::move(index), detail::spatial_shape(in, in.channels, H, W), "pad_replicate");
}

/// Region of the source grid sampled by resize_bilinear, in source cell
/// coordinates. Output cell 0 samples (y0, x0) and the last output cell samples
/// (y1, x1), with uniform spacing in between.
struct SampleWindow {
  double y0, x0, y1, x1;
};

/// Bilinear resampling; by default the window spans the whole source grid
/// (corner-aligned), which reproduces affine signals exactly.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w,
                          std::optional<SampleWindow> window = std::nullopt) {
  const auto in = detail::spatial_of("resize_bilinear", x.shape());
  const SampleWindow win = window.value_or(
      SampleWindow{0.0, 0.0, double(in.height - 1), double(in.width - 1)});
  if (win.y0 < 0 || win.x0 < 0 || win.y1 > double(in.height - 1) || win.x1 > double(in.width - 1))
    throw ShapeError("resize_bilinear: sample window outside source grid " + x.shape().str());
  struct Tap {
    std::size_t lo, hi;
    T w;  // weight of hi
  };
  auto taps = [](double a, double b, std::size_t n_out, std::size_t n_in) {
    std::vector<Tap> t(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double pos = n_out == 1 ? 0.5 * (a + b) : a + (b - a) * double(i) / double(n_out - 1);
      std::size_t lo = std::min<std::size_t>(std::size_t(std::floor(pos)), n_in - 1);
      const std::size_t hi = std::min(lo + 1, n_in - 1);
      t[i] = {lo, hi, T(pos - double(lo))};
      if (hi == lo) t[i].w = T(0);
    }
    return t;
  };
  const auto ty = taps(win.y0, win.y1, out_h, in.height);
  const auto tx = taps(win.x0, win.x1, out_w, in.width);
  const std::size_t planes = in.batch * in.channels;
  Tensor<T> out(detail::spatial_shape(in, in.channels, out_h, out_w));
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * in.height * in.width;
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto& a = ty[i];
        const auto& b = tx[j];
        const T top = src[a.lo * in.width + b.lo] * (T(1) - b.w) + src[a.lo * in.width + b.hi] * b.w;
        const T bot = src[a.hi * in.width + b.lo] * (T(1) - b.w) + src[a.hi * in.width + b.hi] * b.w;
        out[(p * out_h + i) * out_w + j] = top * (T(1) - a.w) + bot * a.w;
      }
  }
  if (GradTape<T>::should_record({&x})) {
    auto xi = x.impl();
    detail::record("resize_bilinear", out, {xi},
                   [xi, ty, tx, planes, in, out_h, out_w](std::span<const T> g) {
                     auto* gx = grad_target(xi);
                     if (!gx) return;
                     for (std::size_t p = 0; p < planes; ++p) {
                       T* dst = gx->data() + p * in.height * in.width;
                       for (std::size_t i = 0; i < out_h; ++i)
                         for (std::size_t j = 0; j < out_w; ++j) {
                           const T go = g[(p * out_h + i) * out_w + j];
                           const auto& a = ty[i];
                           const auto& b = tx[j];
                           dst[a.lo * in.width + b.lo] += go * (T(1) - a.w) * (T(1) - b.w);
                           dst[a.lo * in.width + b.hi] += go * (T(1) - a.w) * b.w;
                           dst[a.hi * in.width + b.lo] += go * a.w * (T(1) - b.w);
                           dst[a.hi * in.width + b.hi] += go * a.w * b.w;
                         }
                     }
                   });
  }
  return out;
}

}  // namespace sgdvit::ops
