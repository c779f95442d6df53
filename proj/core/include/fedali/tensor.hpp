#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fedali/common.hpp"

namespace fedali {

namespace autograd {

/// One recorded operation (or leaf) in the define-by-run graph. The graph is
/// rebuilt for every forward pass and torn down with the loss tensor.
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;  // shared so views are cheap
  std::vector<double> grad;                   // sized lazily on first use
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;  // set once backward has run through this node
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return data ? data->size() : 0; }
  void ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), 0.0);
  }
};

}  // namespace autograd

/// Dense row-major tensor handle. Copying a Tensor shares storage; use
/// clone() for a deep copy. Values are immutable once an op has consumed the
/// tensor, except for leaf parameter buffers updated between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  double* data() { return node_->data->data(); }
  const double* data() const { return node_->data->data(); }
  std::span<const double> values() const { return {data(), size()}; }
  std::span<double> values_mut() { return {data(), size()}; }
  double at(std::size_t i) const { return (*node_->data)[i]; }

  /// Scalar extraction; errors unless size()==1.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  /// Only meaningful on leaves; flips gradient tracking for future graphs.
  void set_requires_grad(bool on);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// New leaf sharing this tensor's storage with gradient tracking severed.
  Tensor detach() const;
  /// Deep copy (fresh storage, leaf, same requires_grad).
  Tensor clone() const;

  /// Checks every value is finite.
  bool all_finite() const;

  std::uint64_t checksum() const {
    return fnv1a(data(), size() * sizeof(double));
  }

  std::shared_ptr<autograd::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<autograd::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<autograd::Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Fills .grad on every tensor that
/// participated with requires_grad set. Visits each node exactly once in
/// reverse topological order; calling it twice on the same recorded graph is
/// an error, as is a (malformed) cyclic graph.
void backward(const Tensor& loss);

}  // namespace fedali
