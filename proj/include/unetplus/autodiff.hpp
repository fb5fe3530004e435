#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unetplus/tensor.hpp"

namespace unetplus {

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid while the
// owning tape is alive.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = std::numeric_limits<std::size_t>::max();

  bool valid() const noexcept { return tape != nullptr; }
  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return tape->value(*this).shape(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

// Gradients of a scalar loss with respect to the leaves that requested them.
template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](Var<T> v) const {
    auto it = grads_.find(v.id);
    if (it == grads_.end()) throw std::out_of_range("no gradient recorded for variable");
    return it->second;
  }
  bool contains(Var<T> v) const { return grads_.count(v.id) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape<T>;
  std::unordered_map<std::size_t, Tensor<T>> grads_;
};

// When enabled, every recorded value is checked for NaN/Inf and domain
// violations in log/div raise DomainError. Per thread.
inline bool& strict_mode() {
  thread_local bool enabled = false;
  return enabled;
}

class StrictModeGuard {
 public:
  explicit StrictModeGuard(bool on = true) : prev_(strict_mode()) { strict_mode() = on; }
  ~StrictModeGuard() { strict_mode() = prev_; }
  StrictModeGuard(const StrictModeGuard&) = delete;
  StrictModeGuard& operator=(const StrictModeGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode tape. Operations are appended in execution order, so node ids
// are already a topological order. Confined to one thread; one tape per step.
template <typename T>
class Tape {
 public:
  // Receives the gradient flowing into the op's output and accumulates into
  // the op's inputs through accumulate_grad / grad_buffer.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    check_finite(value);
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, true, nullptr});
    return Var<T>{this, nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Records an op output. The backward rule is kept only when some input
  // participates in differentiation.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    check_finite(value);
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.tape != this) throw std::logic_error("variable belongs to a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), std::nullopt, needs, false,
                          needs ? std::move(backward) : BackwardFn{}});
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Zero-initialized gradient storage for v, or nullptr if v takes no gradient.
  T* grad_buffer(Var<T> v) {
    Node& node = nodes_.at(v.id);
    if (!node.requires_grad) return nullptr;
    if (!node.grad) node.grad.emplace(node.value.shape(), T{0});
    return node.grad->data().data();
  }

  void accumulate_grad(Var<T> v, const Tensor<T>& g) {
    T* dst = grad_buffer(v);
    if (!dst) return;
    if (g.size() != nodes_[v.id].value.size()) {
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                       shape_str(nodes_[v.id].value.shape()));
    }
    const T* src = g.data().data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
  // Backward rules are released afterwards; values stay readable.
  Gradients<T> backward(Var<T> loss) {
    if (loss.tape != this) throw std::logic_error("loss belongs to a different tape");
    if (nodes_.at(loss.id).value.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       shape_str(nodes_[loss.id].value.shape()));
    }
    if (consumed_) throw std::logic_error("tape already consumed by backward()");
    consumed_ = true;
    for (auto& node : nodes_) node.grad.reset();
    if (T* g = grad_buffer(loss)) g[0] = T{1};
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (node.backward && node.grad) {
        // Move out so accumulation into inputs cannot alias this buffer.
        Tensor<T> g = std::move(*node.grad);
        node.grad.reset();
        node.backward(g, *this);
      }
    }
    Gradients<T> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      Node& node = nodes_[id];
      if (node.is_leaf && node.requires_grad) {
        out.grads_.emplace(id, node.grad ? std::move(*node.grad) : Tensor<T>(node.value.shape()));
      }
      node.grad.reset();
      node.backward = nullptr;
    }
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad;
    bool is_leaf;
    BackwardFn backward;
  };

  static void check_finite(const Tensor<T>& v) {
    if (strict_mode() && !v.all_finite()) throw DomainError("non-finite value recorded on tape");
  }

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace unetplus
