#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sgdvit/data/image.hpp"

namespace sgdvit::data {

/// Axis-aligned box in continuous frame coordinates (pixel k spans [k, k+1)).
struct BBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  static BBox from_xywh(double x, double y, double w, double h) { return {x + w / 2, y + h / 2, w, h}; }
  double x() const { return cx - w / 2; }
  double y() const { return cy - h / 2; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }
};

struct Sequence {
  std::vector<Image> frames;
  std::vector<BBox> boxes;  // ground truth, one per frame (may be just the first)
};

inline std::string format_box(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f", b.x(), b.y(), b.w, b.h);
  return buf;
}

/// One `x,y,w,h` line per box (commas, tabs or spaces as separators).
inline std::vector<BBox> read_boxes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open box file " + path);
  std::vector<BBox> boxes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::replace_if(line.begin(), line.end(), [](char c) { return c == ',' || c == '\t'; }, ' ');
    std::istringstream ss(line);
    double v[4];
    if (!(ss >> v[0])) {
      if (line.find_first_not_of(" \r") == std::string::npos) continue;
      throw DataError(path + ":" + std::to_string(lineno) + ": expected x,y,w,h");
    }
    if (!(ss >> v[1] >> v[2] >> v[3]))
      throw DataError(path + ":" + std::to_string(lineno) + ": expected x,y,w,h");
    boxes.push_back(BBox::from_xywh(v[0], v[1], v[2], v[3]));
  }
  return boxes;
}

inline void write_boxes(const std::string& path, const std::vector<BBox>& boxes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& b : boxes) os << format_box(b) << '\n';
}

/// Directory of PPM frames (sorted by file name) plus groundtruth.txt.
inline Sequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError(dir + ": no .ppm frames");
  const auto gt = (fs::path(dir) / "groundtruth.txt").string();
  if (!fs::exists(gt)) throw DataError(dir + ": missing groundtruth.txt");
  Sequence seq;
  seq.boxes = read_boxes(gt);
  if (seq.boxes.empty()) throw DataError(gt + ": missing first ground-truth line");
  if (seq.boxes.size() > files.size())
    throw DataError(gt + ": more ground-truth lines than frames");
  for (const auto& f : files) seq.frames.push_back(read_ppm(f.string()));
  for (const auto& f : seq.frames)
    if (f.width != seq.frames[0].width || f.height != seq.frames[0].height)
      throw DataError(dir + ": frames differ in size");
  return seq;
}

inline void write_sequence(const std::string& dir, const Sequence& seq) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", i + 1);
    write_ppm((fs::path(dir) / name).string(), seq.frames[i]);
  }
  write_boxes((fs::path(dir) / "groundtruth.txt").string(), seq.boxes);
}

}  // namespace sgdvit::data
