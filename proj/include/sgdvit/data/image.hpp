#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sgdvit/core/error.hpp"

namespace sgdvit::data {

/// 8-bit interleaved RGB image.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

  /// Per-channel mean in [0, 255].
  std::array<double, 3> channel_mean() const {
    std::array<double, 3> m{0, 0, 0};
    for (std::size_t i = 0; i < rgb.size(); ++i) m[i % 3] += rgb[i];
    for (auto& v : m) v /= double(std::max<std::size_t>(1, width * height));
    return m;
  }

  bool operator==(const Image&) const = default;
};

namespace detail {

// Next whitespace-separated header token, skipping '#' comments.
inline std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

inline std::size_t pnm_number(std::istream& is, const std::string& path, const char* what) {
  const auto tok = pnm_token(is);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit))
    throw DataError(path + ": bad PPM " + what + " '" + tok + "'");
  return std::stoul(tok);
}

}  // namespace detail

/// Binary PPM (P6) with maxval 255.
inline Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path);
  if (detail::pnm_token(is) != "P6") throw DataError(path + ": not a binary PPM (P6) file");
  Image img;
  img.width = detail::pnm_number(is, path, "width");
  img.height = detail::pnm_number(is, path, "height");
  const auto maxval = detail::pnm_number(is, path, "maxval");
  if (maxval != 255) throw DataError(path + ": only maxval 255 is supported");
  if (img.width == 0 || img.height == 0) throw DataError(path + ": empty image");
  img.rgb.resize(img.width * img.height * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (std::size_t(is.gcount()) != img.rgb.size()) throw DataError(path + ": truncated pixel data");
  return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image " + path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
}

/// Grayscale PGM (P5) of `values` (row-major), min-max normalized to 0..255.
inline void write_pgm(const std::string& path, std::size_t width, std::size_t height,
                      const std::vector<double>& values) {
  if (values.size() != width * height) throw DataError("write_pgm: value count does not match size");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image " + path);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  os << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double n = range > 0 ? (v - *lo) / range : 0.0;
    os.put(char(std::uint8_t(std::lround(n * 255))));
  }
}

}  // namespace sgdvit::data
