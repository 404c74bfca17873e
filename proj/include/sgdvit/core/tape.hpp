#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/tensor.hpp"

namespace sgdvit {

/// Reverse-mode gradient tape.
///
/// Constructing a tape makes it the active tape of the calling thread for its
/// scalar type; ops executed while a tape is active append one node each when
/// any input requires a gradient. The graph is rebuilt on every forward pass,
/// so data-dependent structure (variable token counts) needs no special care.
///
/// Tensors that do not require a gradient, including detach()ed copies, are
/// constants: backward() never writes into them.
template <class T>
class GradTape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  struct Node {
    std::string kind;
    std::vector<detail::ImplPtr<T>> inputs;
    detail::ImplPtr<T> output;
    BackwardFn backward;
  };

  GradTape() : previous_(slot()) { slot() = this; }
  ~GradTape() { slot() = previous_; }
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active() { return slot(); }

  /// True when an op over these inputs must be recorded.
  static bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
    if (!active()) return false;
    for (auto* t : inputs)
      if (t && t->defined() && t->requires_grad()) return true;
    return false;
  }
  static bool should_record(const std::vector<Tensor<T>>& inputs) {
    if (!active()) return false;
    for (const auto& t : inputs)
      if (t.requires_grad()) return true;
    return false;
  }

  void record(std::string kind, std::vector<detail::ImplPtr<T>> inputs, detail::ImplPtr<T> output,
              BackwardFn fn) {
    output->requires_grad = true;
    nodes_.push_back(Node{std::move(kind), std::move(inputs), std::move(output), std::move(fn)});
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Populates d(loss)/d(x) for every gradient-requiring tensor reachable from
  /// the scalar loss. Gradients accumulate into existing buffers.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " + loss.shape().str());
    if (!loss.requires_grad()) return;
    loss.impl()->grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // not an ancestor of the loss
      it->backward(it->output->grad);
    }
  }

 private:
  static GradTape*& slot() {
    thread_local GradTape* current = nullptr;
    return current;
  }

  GradTape* previous_;
  std::vector<Node> nodes_;
};

/// Gradient buffer of an op input, or nullptr when the input is a constant.
template <class T>
AlignedBuffer<T>* grad_target(const detail::ImplPtr<T>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  return &impl->grad_buffer();
}

/// Runs backward on the active tape.
template <class T>
void backward(const Tensor<T>& loss) {
  auto* tape = GradTape<T>::active();
  if (!tape) throw Error("backward: no active gradient tape");
  tape->backward(loss);
}

}  // namespace sgdvit
