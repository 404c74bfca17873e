#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/error.hpp"
#include "sgdvit/core/shape.hpp"

namespace sgdvit {

namespace detail {

// 64-byte aligned storage. Vectorized kernels pick their loop split from the
// runtime address, so a fixed base alignment keeps float results bit-exact
// across runs and processes.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

}  // namespace detail

template <class T>
using AlignedBuffer = std::vector<T, detail::AlignedAllocator<T>>;

namespace detail {

template <class T>
struct TensorImpl {
  Shape shape;
  AlignedBuffer<T> data;
  AlignedBuffer<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  // Allocates the gradient buffer on first use.
  AlignedBuffer<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <class T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

}  // namespace detail

/// Dense row-major tensor with an optional gradient.
///
/// A Tensor is a shared handle: copies alias the same buffer. Use clone() for
/// a deep copy and detach() for a deep copy that is excluded from autodiff.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    impl_->data.assign(shape.numel(), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    if (values.size() != shape.numel())
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                       shape.str());
    impl_->data.assign(values.begin(), values.end());
    impl_->shape = std::move(shape);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  /// Trainable leaf: gradients are accumulated into it by backward().
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.impl_->requires_grad = true;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.rank(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw ShapeError("item(): tensor of shape " + shape().str() + " is not scalar");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), T(0)); }
  void clear_grad() { impl_->grad.clear(); }

  /// Deep copy that keeps the requires_grad flag but not the gradient.
  Tensor clone() const {
    Tensor t(shape(), std::vector<T>(impl_->data.begin(), impl_->data.end()));
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  /// Deep copy treated as a constant by autodiff.
  Tensor detach() const { return Tensor(shape(), std::vector<T>(impl_->data.begin(), impl_->data.end())); }

  /// Same-precision copy converted to another scalar type.
  template <class U>
  Tensor<U> cast() const {
    std::vector<U> v(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(shape(), std::move(v));
  }

  const detail::ImplPtr<T>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  detail::ImplPtr<T> impl_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace sgdvit
