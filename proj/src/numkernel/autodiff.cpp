#include "anysleep/numkernel/autodiff.hpp"

#include <unordered_set>

#include "anysleep/core/errors.hpp"

namespace anysleep::nk {

namespace {
thread_local bool g_grad_enabled = true;
}

Array& Node::grad_buffer() {
  if (grad_.shape() != value_.shape()) grad_ = Array(value_.shape(), 0.0);
  return grad_;
}

Var leaf(Array value, bool requires_grad) {
  return Var(std::make_shared<Node>(std::move(value), requires_grad));
}

Var make_node(Array value, std::vector<Var> parents, Node::BackwardFn fn) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& p : parents) needs = needs || p.requires_grad();
  }
  auto node = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    node->parents_.reserve(parents.size());
    for (Var& p : parents) node->parents_.push_back(p.ptr());
    node->backward_ = std::move(fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root) throw Error("backward: empty root");
  if (root.value().size() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " + shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion
  // depth limits on long graphs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&root.node(), 0);
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents().size()) {
      Node* p = node->parents()[next++].get();
      if (p->requires_grad() && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node().grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_ && !n->grad_.empty()) n->backward_(*n);
  }
  for (Node* n : order) {
    if (!n->parents_.empty()) {
      n->parents_.clear();
      n->backward_ = nullptr;
      n->grad_ = Array();
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace anysleep::nk
