#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sit/autodiff/array.hpp"

namespace sit::ad {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Array<T>& value() const { return tape->value(*this); }
  Shape shape() const { return value().shape(); }
};

// Reverse-mode tape. Values are recorded in execution order; backward()
// replays the recorded closures in exact reverse order, accumulating
// gradients additively wherever a value fans out.
//
// A tape created with record == false only evaluates: no closures are kept
// and nothing requires a gradient.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Array<T>& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> constant(Array<T> value) { return push(std::move(value), false, {}); }

  // Leaf whose gradient is kept on the tape (read it back with grad()).
  Var<T> variable(Array<T> value) { return push(std::move(value), record_, {}); }

  // Leaf that borrows `value` without copying. With a sink, gradients are
  // accumulated straight into *sink (same shape as value); without one the
  // leaf is a constant.
  Var<T> borrow(const Array<T>& value, Array<T>* sink) {
    Node node;
    node.borrowed = &value;
    node.sink = record_ ? sink : nullptr;
    node.requires_grad = node.sink != nullptr;
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  // Records an op result. `backward` is dropped when no input needs a
  // gradient or the tape is not recording.
  Var<T> push(Array<T> value, bool requires_grad, Backward backward) {
    Node node;
    node.owned = std::move(value);
    node.requires_grad = record_ && requires_grad;
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Array<T>& value(Var<T> v) const {
    const Node& n = nodes_[v.id];
    return n.borrowed ? *n.borrowed : n.owned;
  }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  // Gradient accumulator of v, zero-initialised on first access.
  Array<T>& grad_buffer(Var<T> v) {
    Node& n = nodes_[v.id];
    if (n.sink) return *n.sink;
    if (n.grad.empty() && value(v).size() != 0) n.grad = Array<T>(value(v).shape());
    return n.grad;
  }

  // Gradient of a non-borrowed leaf after backward(); zeros if untouched.
  Array<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.sink) return *n.sink;
    return n.grad.empty() ? Array<T>(value(v).shape()) : n.grad;
  }

  // Seeds d(output)/d(output) = seed (output must be 1x1) and propagates.
  void backward(Var<T> output, T seed = T{1}) {
    if (value(output).size() != 1)
      throw ShapeError("backward() needs a scalar output, got " + value(output).shape().str());
    if (!nodes_[output.id].requires_grad) return;
    grad_buffer(output)[0] += seed;
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array<T> owned;
    const Array<T>* borrowed = nullptr;
    Array<T> grad;
    Array<T>* sink = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace sit::ad
