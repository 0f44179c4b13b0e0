#include "sdcn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace sdcn {

Var Var::constant(Tensor value) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  return v;
}

Var Var::input(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

Var Var::parameter(Tensor value, Tensor* sink) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = sink != nullptr;
  v.node_->sink = sink;
  return v;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("Var: undefined value");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Var::grad() const {
  if (!node_) throw std::logic_error("Var: undefined value");
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var Var::make(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var v = constant(std::move(value));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return v;
  v.node_->requires_grad = true;
  v.node_->backward = std::move(backward);
  v.node_->inputs.reserve(inputs.size());
  for (auto& in : inputs) v.node_->inputs.push_back(in.node_);
  return v;
}

Tensor* grad_buffer(Node* n) {
  if (!n->requires_grad) return nullptr;
  if (n->grad.size() != n->value.size()) {
    n->grad = Tensor(n->value.shape(), 0.0);
  }
  return &n->grad;
}

void backward(const Var& root) {
  Node* r = root.node();
  if (r == nullptr) throw std::logic_error("backward: undefined root");
  if (r->value.size() != 1) {
    throw std::logic_error("backward: root must be a scalar, got " +
                           shape_string(r->value.shape()));
  }
  if (!r->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{r, 0}};
  visited.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Gradients left on the graph by an earlier backward() are discarded;
  // only parameter sinks accumulate across passes.
  for (Node* n : order) {
    if (n->grad.size() == n->value.size()) n->grad.fill(0.0);
  }
  grad_buffer(r)->fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->sink == nullptr || n->grad.size() != n->value.size()) continue;
    if (n->sink->size() != n->grad.size()) {
      *n->sink = Tensor(n->value.shape(), 0.0);
    }
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      (*n->sink)[i] += n->grad[i];
    }
  }
}

Var stop_gradient(const Var& v) { return Var::constant(v.value()); }

}  // namespace sdcn
