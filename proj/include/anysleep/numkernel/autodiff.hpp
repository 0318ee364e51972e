#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "anysleep/numkernel/array.hpp"

namespace anysleep::nk {

class Node;
class Var;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the dynamically built differentiation graph. A node owns its
// forward value and, once backward() reaches it, the gradient of the root
// with respect to that value. Interior nodes hold their parents and a closure
// that pushes their own gradient into the parents' gradients.
class Node {
 public:
  using BackwardFn = std::function<void(Node& self)>;

  explicit Node(Array value, bool requires_grad = false)
      : value_(std::move(value)), requires_grad_(requires_grad) {}

  const Array& value() const noexcept { return value_; }
  bool requires_grad() const noexcept { return requires_grad_; }
  bool has_grad() const noexcept { return !grad_.empty() || value_.empty(); }
  const Array& grad() const noexcept { return grad_; }

  // Lazily allocated zero gradient of the value's shape.
  Array& grad_buffer();
  void zero_grad() { grad_ = Array(); }

  const std::vector<NodePtr>& parents() const noexcept { return parents_; }
  Node& parent(std::size_t i) { return *parents_[i]; }

 private:
  friend class Var;
  friend Var make_node(Array, std::vector<Var>, BackwardFn);
  friend void backward(const Var&);

  Array value_;
  Array grad_;
  bool requires_grad_;
  std::vector<NodePtr> parents_;
  BackwardFn backward_;
};

// Value handle into the graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Array& value() const { return node_->value(); }
  const Array& grad() const { return node_->grad(); }
  const Shape& shape() const { return node_->value().shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad(); }
  Node& node() const { return *node_; }
  const NodePtr& ptr() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

// Leaf node: an input or a parameter.
Var leaf(Array value, bool requires_grad = false);

// Interior node. When gradients are disabled or no parent needs one, the
// result is a plain constant and the closure is dropped.
Var make_node(Array value, std::vector<Var> parents, Node::BackwardFn fn);

// Reverse sweep from a scalar root. Visits nodes in reverse topological
// order, then releases every interior edge so the graph's memory is returned.
// Leaf gradients accumulate across calls until zero_grad().
void backward(const Var& root);

bool grad_enabled();

// Disables graph construction for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace anysleep::nk
