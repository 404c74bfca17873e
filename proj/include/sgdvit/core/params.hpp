#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/rng.hpp"
#include "sgdvit/core/tensor.hpp"

namespace sgdvit {

/// Ordered name -> parameter mapping. Names are hierarchical and dot separated
/// (`sft.encoder.mha.w1.0`); they key the checkpoint manifest.
template <class T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  void add(std::string name, Tensor<T> t) {
    for (const auto& e : entries_)
      if (e.name == name) throw Error("duplicate parameter name '" + name + "'");
    entries_.push_back({std::move(name), std::move(t)});
  }

  void merge(const std::string& prefix, const ParamSet& other) {
    for (const auto& e : other.entries_) add(prefix + "." + e.name, e.tensor);
  }

  const std::vector<Entry>& entries() const& { return entries_; }
  // by value on temporaries, so `for (auto& e : m.params().entries())` is safe
  std::vector<Entry> entries() && { return std::move(entries_); }
  std::size_t size() const { return entries_.size(); }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() const {
    for (const auto& e : entries_) Tensor<T>(e.tensor).clear_grad();
  }

 private:
  std::vector<Entry> entries_;
};

/// Kaiming-uniform weights: U(-b, b) with b = sqrt(6 / fan_in).
template <class T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = T(rng.uniform(-bound, bound));
  return Tensor<T>::parameter(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> zeros_parameter(Shape shape) {
  return Tensor<T>::parameter(shape, std::vector<T>(shape.numel(), T(0)));
}

template <class T>
Tensor<T> constant_parameter(Shape shape, T value) {
  return Tensor<T>::parameter(shape, std::vector<T>(shape.numel(), value));
}

}  // namespace sgdvit
