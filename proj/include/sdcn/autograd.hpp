#ifndef SDCN_AUTOGRAD_HPP_
#define SDCN_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "sdcn/tensor.hpp"

namespace sdcn {

struct Node;

// Handle to a value in a reverse-mode computation graph. Graphs are built
// eagerly by the ops in ops.hpp and released when the last handle goes away.
class Var {
 public:
  Var() = default;

  // No gradient is tracked through a constant.
  static Var constant(Tensor value);
  // Leaf whose gradient is readable through grad() after backward().
  static Var input(Tensor value);
  // Leaf whose gradient is added into *sink after backward(); a null sink
  // makes the leaf frozen (treated as a constant).
  static Var parameter(Tensor value, Tensor* sink);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  // Zero-filled tensor when no gradient reached this node.
  Tensor grad() const;

  Node* node() const { return node_.get(); }

  using BackwardFn = std::function<void(Node& self)>;
  // Builds an interior node. The backward function reads self.grad and
  // accumulates into the inputs (see accumulate()).
  static Var make(Tensor value, std::vector<Var> inputs, BackwardFn backward);

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  Var::BackwardFn backward;
  Tensor* sink = nullptr;

  Node* input(std::size_t i) const { return inputs[i].get(); }
};

// Gradient buffer of n, allocated as zeros on first use. Returns nullptr when
// n does not require a gradient.
Tensor* grad_buffer(Node* n);

// Runs reverse-mode accumulation from a scalar root (seed gradient 1).
// Node gradients are recomputed on every call; parameter sinks accumulate.
void backward(const Var& root);

// Detached copy of v's value.
Var stop_gradient(const Var& v);

}  // namespace sdcn

#endif  // SDCN_AUTOGRAD_HPP_
