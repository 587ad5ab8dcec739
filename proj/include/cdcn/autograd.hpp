#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cdcn/tensor.hpp"

namespace cdcn::nn {

// Reverse-mode differentiation on a dynamically recorded graph. A result
// keeps references to its inputs only when at least one of them requires a
// gradient, so inference graphs free intermediates as soon as they go out of
// scope.
struct Node {
  Tensor value;
  const Tensor* external = nullptr;  // leaves may alias parameter storage
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  const Tensor& val() const { return external ? *external : value; }
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->val(); }
  const Shape& shape() const { return node_->val().shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  // Null until backward() reached this variable.
  const Tensor* grad() const { return node_->grad.empty() ? nullptr : &node_->grad; }
  bool valid() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
// Leaf aliasing `storage`, which must outlive every graph built from it.
Var leaf(const Tensor& storage, bool requires_grad);

// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
void backward(const Var& root);

// Stride-1 convolution (cross-correlation) with zero "same" padding.
// weight: (out, in, k, k), k odd; bias: (out, 1, 1, 1).
Var conv2d(const Var& x, const Var& weight, const Var& bias);

Var add(const Var& a, const Var& b);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
// (N, C, H, W) -> (N, C, 1, 1)
Var global_avg_pool(const Var& x);
// x * a with a of shape (N, C, 1, 1) broadcast over space.
Var scale_channels(const Var& x, const Var& a);
Var concat_channels(const std::vector<Var>& parts);
// (N, C r^2, H, W) -> (N, C, H r, W r), channel c*r*r + i*r + j -> offset (i, j).
Var pixel_shuffle(const Var& x, int r);
// Mean absolute error against a fixed target; returns a (1,1,1,1) scalar.
Var l1_loss(const Var& pred, const Tensor& target);

}  // namespace cdcn::nn
