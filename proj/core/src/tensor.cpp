#include "fedali/tensor.hpp"

#include <cmath>
#include <unordered_map>

namespace fedali {

using autograd::Node;

static Tensor make_leaf(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  FEDALI_CHECK(numel(shape) == data.size(), "tensor: shape ", shape_str(shape),
               " does not match data length ", data.size());
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<double>>(std::move(data));
  node->requires_grad = requires_grad;
  node->leaf = true;
  return Tensor::wrap(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(numel(shape), 0.0);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(numel(shape), value);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return make_leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
  FEDALI_CHECK(size() == 1, "item: tensor has ", size(), " elements");
  return (*node_->data)[0];
}

void Tensor::set_requires_grad(bool on) {
  FEDALI_CHECK(node_->leaf, "set_requires_grad: only valid on leaf tensors");
  node_->requires_grad = on;
}

std::span<const double> Tensor::grad() const {
  FEDALI_CHECK(has_grad(), "grad: no gradient recorded for this tensor");
  return {node_->grad.data(), node_->grad.size()};
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;  // shared storage, no graph edge
  node->requires_grad = false;
  node->leaf = true;
  return wrap(std::move(node));
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = std::make_shared<std::vector<double>>(*node_->data);
  node->requires_grad = node_->requires_grad;
  node->leaf = true;
  return wrap(std::move(node));
}

bool Tensor::all_finite() const {
  for (double v : *node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

void backward(const Tensor& loss) {
  FEDALI_CHECK(loss.defined() && loss.size() == 1,
               "backward: loss must be a defined scalar tensor");
  FEDALI_CHECK(loss.requires_grad(),
               "backward: loss does not require grad (nothing to do)");

  // Iterative DFS topological sort over parent edges. state: 1=on stack,
  // 2=done. A node met while still on the stack means a cycle.
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (!p->requires_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.push_back({p, 0});
      } else {
        FEDALI_CHECK(it->second != 1, "backward: cycle detected in op graph");
      }
    } else {
      FEDALI_CHECK(!f.node->consumed,
                   "backward: graph already consumed (double backward)");
      order.push_back(f.node);
      state[f.node] = 2;
      stack.pop_back();
    }
  }

  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->consumed = true;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace fedali
