#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mobonet/errors.hpp"
#include "mobonet/rng.hpp"

namespace mobo {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Extents of a 4-D tensor, batch x channels x height x width. Data is stored
// c-contiguous: index = ((n*C + c)*H + y)*W + x.
struct Shape {
  Eigen::Index n = 1;
  Eigen::Index c = 1;
  Eigen::Index h = 1;
  Eigen::Index w = 1;

  Eigen::Index numel() const { return n * c * h * w; }
  bool operator==(const Shape& o) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

namespace detail {

// One node of the computation graph. Ops append nodes; backward() walks the
// graph once in reverse topological order.
template <typename S>
struct Node {
  const char* op = "leaf";
  Shape shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node<S>&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<S>::Zero(value.size());
  }
};

}  // namespace detail

// Value-semantic handle to a graph node. Copies alias the same storage, the
// way Eigen expression handles share their operands.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return filled(shape, S(0), requires_grad);
  }

  static Tensor filled(const Shape& shape, S value, bool requires_grad = false) {
    Tensor t = with_node(shape);
    t.node_->value.setConstant(value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_values(const Shape& shape, ArrayX<S> values, bool requires_grad = false) {
    if (values.size() != shape.numel())
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape.str());
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = shape;
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  // Gaussian fill with sigma scaled by 1/sqrt(fan_in); the usual init for
  // ReLU conv stacks.
  static Tensor randn(const Shape& shape, Rng& rng, double sigma, bool requires_grad = true) {
    Tensor t = with_node(shape);
    for (Eigen::Index i = 0; i < t.node_->value.size(); ++i)
      t.node_->value[i] = static_cast<S>(rng.normal(0.0, sigma));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index numel() const { return node_->shape.numel(); }

  ArrayX<S>& values() { return node_->value; }
  const ArrayX<S>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  ArrayX<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const ArrayX<S>& grad() const {
    if (!has_grad()) throw StateError("gradient not populated");
    return node_->grad;
  }
  void clear_grad() { node_->grad.resize(0); }

  S scalar() const {
    if (numel() != 1) throw ArgumentError("scalar() on tensor of shape " + shape().str());
    return node_->value[0];
  }

  std::shared_ptr<detail::Node<S>>& node() { return node_; }
  const std::shared_ptr<detail::Node<S>>& node() const { return node_; }

  // Used by ops to construct result tensors.
  static Tensor with_node(const Shape& shape) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = shape;
    t.node_->value = ArrayX<S>::Zero(shape.numel());
    return t;
  }

 private:
  std::shared_ptr<detail::Node<S>> node_;
};

// Reverse-mode sweep from a scalar loss. Every tensor with requires_grad
// reachable from the loss receives dLoss/dTensor; fan-out accumulates by
// summation. Traversal order is fixed by graph construction order, so the
// sweep is bitwise deterministic.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.numel() != 1) throw ArgumentError("backward() needs a scalar loss, got " + loss.shape().str());

  using NodeT = detail::Node<S>;
  // Iterative post-order DFS over parents.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  struct Frame {
    NodeT* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  NodeT* root = loss.node().get();
  if (seen.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      NodeT* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += S(1);

  // order is post-order (parents before consumers); walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward_fn && node->requires_grad) node->backward_fn(*node);
  }
}

}  // namespace mobo
