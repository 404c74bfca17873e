#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "sgdvit/core/params.hpp"
#include "sgdvit/core/tensor.hpp"

/// Raw tensor files and checkpoints.
///
/// Raw tensor layout (all integers little-endian):
///   "SGDT" | u8 version=1 | u8 dtype (0=f32, 1=f64) | u8 rank | u8 pad=0
///   | rank x u64 dims | numel little-endian scalars
///
/// Checkpoint layout: a text manifest followed by concatenated raw tensors.
///   sgdvit-checkpoint 1
///   entries <n>
///   <name> <byte offset into blob> <f32|f64> <d0xd1x...>     (n lines)
///   end
///   <blob>
namespace sgdvit::io {

static_assert(std::endian::native == std::endian::little, "raw tensor I/O assumes little-endian");

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

inline std::size_t raw_header_size(std::size_t rank) { return 8 + 8 * rank; }

template <class T>
std::size_t raw_size(const Tensor<T>& t) {
  return raw_header_size(t.rank()) + sizeof(T) * t.numel();
}

template <class T>
void write_raw(std::ostream& os, const Tensor<T>& t) {
  const char header[8] = {'S', 'G', 'D', 'T', 1, char(dtype_of<T>()), char(t.rank()), 0};
  os.write(header, 8);
  for (auto d : t.shape().dims()) {
    const std::uint64_t v = d;
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  os.write(reinterpret_cast<const char*>(t.data().data()), std::streamsize(sizeof(T) * t.numel()));
  if (!os) throw DataError("write_raw: stream failure");
}

namespace detail {

template <class Src, class T>
std::vector<T> read_values(std::istream& is, std::size_t n) {
  std::vector<Src> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(sizeof(Src) * n));
  if (!is) throw DataError("read_raw: truncated tensor data");
  return std::vector<T>(raw.begin(), raw.end());
}

}  // namespace detail

/// Reads one raw tensor, converting the stored dtype to T.
template <class T>
Tensor<T> read_raw(std::istream& is) {
  char header[8];
  is.read(header, 8);
  if (!is || std::memcmp(header, "SGDT", 4) != 0) throw DataError("read_raw: bad magic");
  if (header[4] != 1) throw DataError("read_raw: unsupported version " + std::to_string(int(header[4])));
  const auto dtype = static_cast<std::uint8_t>(header[5]);
  const auto rank = static_cast<std::uint8_t>(header[6]);
  if (dtype > 1) throw DataError("read_raw: unknown dtype " + std::to_string(dtype));
  if (rank == 0) throw DataError("read_raw: rank 0");
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("read_raw: truncated dims");
    d = v;
  }
  Shape shape(dims);
  auto values = dtype == 0 ? detail::read_values<float, T>(is, shape.numel())
                           : detail::read_values<double, T>(is, shape.numel());
  return Tensor<T>(std::move(shape), std::move(values));
}

template <class T>
void save_raw(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  write_raw(os, t);
}

template <class T>
Tensor<T> load_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return read_raw<T>(is);
}

struct ManifestEntry {
  std::string name;
  std::uint64_t offset;
  DType dtype;
  Shape shape;
};

template <class T>
void save_checkpoint(const std::string& path, const ParamSet<T>& params) {
  std::ostringstream manifest;
  manifest << "sgdvit-checkpoint 1\nentries " << params.size() << "\n";
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    std::string dims;
    for (std::size_t i = 0; i < e.tensor.rank(); ++i)
      dims += (i ? "x" : "") + std::to_string(e.tensor.dim(i));
    manifest << e.name << ' ' << offset << ' ' << dtype_name(dtype_of<T>()) << ' ' << dims << '\n';
    offset += raw_size(e.tensor);
  }
  manifest << "end\n";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  const std::string m = manifest.str();
  os.write(m.data(), std::streamsize(m.size()));
  for (const auto& e : params.entries()) write_raw(os, e.tensor);
  if (!os) throw DataError("checkpoint write failed: " + path);
}

/// Parses the manifest and leaves `is` positioned at the start of the blob.
inline std::vector<ManifestEntry> read_manifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "sgdvit-checkpoint 1") throw DataError("not a checkpoint");
  std::size_t n = 0;
  if (!std::getline(is, line) || std::sscanf(line.c_str(), "entries %zu", &n) != 1)
    throw DataError("checkpoint: missing entry count");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw DataError("checkpoint: truncated manifest");
    std::istringstream ls(line);
    ManifestEntry e{};
    std::string dtype, dims;
    if (!(ls >> e.name >> e.offset >> dtype >> dims)) throw DataError("checkpoint: bad line '" + line + "'");
    if (dtype != "f32" && dtype != "f64") throw DataError("checkpoint: bad dtype '" + dtype + "'");
    e.dtype = dtype == "f32" ? DType::F32 : DType::F64;
    std::vector<std::size_t> d;
    std::istringstream ds(dims);
    std::string tok;
    while (std::getline(ds, tok, 'x')) d.push_back(std::stoull(tok));
    e.shape = Shape(d);
    entries.push_back(std::move(e));
  }
  if (!std::getline(is, line) || line != "end") throw DataError("checkpoint: missing manifest end");
  return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return read_manifest(is);
}

/// Copies checkpoint values into the matching parameters. Every parameter must
/// be present with the same shape; extra checkpoint entries are an error too.
template <class T>
void load_checkpoint(const std::string& path, const ParamSet<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const auto manifest = read_manifest(is);
  const auto blob_start = is.tellg();
  if (manifest.size() != params.size())
    throw DataError("checkpoint " + path + " has " + std::to_string(manifest.size()) +
                    " entries, model expects " + std::to_string(params.size()));
  for (const auto& m : manifest) {
    const Tensor<T>* target = params.find(m.name);
    if (!target) throw DataError("checkpoint entry '" + m.name + "' does not match the model");
    if (!(target->shape() == m.shape))
      throw DataError("checkpoint entry '" + m.name + "' has shape " + m.shape.str() +
                      ", model expects " + target->shape().str());
    is.seekg(blob_start + std::streamoff(m.offset));
    Tensor<T> loaded = read_raw<T>(is);
    Tensor<T> dst = *target;
    std::copy(loaded.data().begin(), loaded.data().end(), dst.data().begin());
  }
}

}  // namespace sgdvit::io
