#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/params.hpp"
#include "samnet/core/tensor.hpp"

namespace samnet::nd {

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const { return tape_->shape(id_); }
  std::span<const T> value() const { return tape_->value(id_); }
  std::size_t numel() const { return tape_->value(id_).size(); }
  T item() const { return tape_->value(id_)[0]; }
  T operator[](std::size_t i) const { return tape_->value(id_)[i]; }
  bool needs_grad() const { return tape_->needs_grad(id_); }

  Tensor<T> tensor() const {
    auto v = value();
    return Tensor<T>(shape(), Buffer<T>(v.begin(), v.end()));
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. One tape per example; never shared across threads.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> t) { return push(std::move(t.shape), std::move(t.data), false, {}); }

  Var<T> input(Tensor<T> t, bool requires_grad) {
    return push(std::move(t.shape), std::move(t.data), requires_grad, {});
  }

  /// Leaf for a model parameter; repeated calls for the same parameter share one node.
  Var<T> param(const Parameter<T>& p) {
    if (p.index >= param_nodes_.size()) param_nodes_.resize(p.index + 1, kNone);
    if (param_nodes_[p.index] != kNone) return {this, param_nodes_[p.index]};
    Var<T> v = push(p.value.shape, p.value.data, true, {});
    nodes_[v.id()].param_index = static_cast<std::int64_t>(p.index);
    param_nodes_[p.index] = v.id();
    return v;
  }

  Var<T> push(Shape shape, Buffer<T> value, bool needs_grad, Backward fn) {
    if (value.size() != numel(shape)) {
      throw ShapeError("node value length does not match shape " + to_string(shape));
    }
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = needs_grad ? std::move(fn) : Backward{};
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  std::span<const T> value(std::uint32_t id) const {
    return {nodes_[id].value.data(), nodes_[id].value.size()};
  }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  /// Gradient accumulator of a node, allocated on first use.
  Buffer<T>& grad_mut(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  std::span<const T> grad(std::uint32_t id) const {
    return {nodes_[id].grad.data(), nodes_[id].grad.size()};
  }
  std::span<const T> grad(Var<T> v) const { return grad(v.id()); }

  void backward(Var<T> root) {
    if (root.numel() != 1) throw ShapeError("backward root must be a scalar");
    if (!nodes_[root.id()].needs_grad) return;
    grad_mut(root.id())[0] = T(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }

  /// Adds parameter-leaf gradients into `out` (indexed like the ParamStore).
  void accumulate_param_grads(GradientSet<T>& out) const {
    for (const auto& n : nodes_) {
      if (n.param_index < 0 || n.grad.empty()) continue;
      auto& dst = out.grads.at(static_cast<std::size_t>(n.param_index));
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr std::uint32_t kNone = ~std::uint32_t{0};

  struct Node {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    Backward backward;
    bool needs_grad = false;
    std::int64_t param_index = -1;
  };

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_nodes_;
};

}  // namespace samnet::nd
