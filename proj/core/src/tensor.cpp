#include "deeplight/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace dl {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Scalar(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Scalar Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

std::span<Scalar> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Scalar(0));
  return impl_->grad;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

void Node::release() {
  inputs.clear();
  backward = nullptr;
  consumed = true;
}

bool any_requires_grad(std::initializer_list<const Tensor*> tensors) {
  for (const Tensor* t : tensors) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<Scalar> values, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const Scalar>)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || (t.defined() && t.requires_grad());
  if (needs_grad) {
    auto node = std::make_shared<Node>();
    node->op = std::move(op);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl()->grad_fn = std::move(node);
    out.set_requires_grad(true);
  }
  return out;
}

Graph Graph::capture(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.grad_fn()) return g;

  // Iterative post-order DFS: a node is emitted after all its producers.
  struct Frame {
    std::shared_ptr<TensorImpl> tensor;
    std::size_t next_input;
  };
  std::unordered_set<const Node*> visited;
  std::vector<Frame> stack;
  stack.push_back({root.shared_impl(), 0});
  visited.insert(root.grad_fn().get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& node = top.tensor->grad_fn;
    if (top.next_input < node->inputs.size()) {
      const Tensor& in = node->inputs[top.next_input++];
      if (in.defined() && in.grad_fn() && !in.grad_fn()->consumed &&
          visited.insert(in.grad_fn().get()).second) {
        stack.push_back({in.shared_impl(), 0});
      }
      continue;
    }
    g.nodes_.push_back(node);
    g.outputs_.push_back(top.tensor);
    stack.pop_back();
  }
  return g;
}

void Graph::run_backward() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& node = nodes_[i];
    auto& out = outputs_[i];
    if (!out->grad.empty() && node->backward) node->backward(out->grad);
    node->release();
  }
}

void Graph::clear() {
  for (auto& node : nodes_) node->release();
  nodes_.clear();
  outputs_.clear();
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw StateError("loss does not depend on any requires_grad tensor");
  if (loss.grad_fn() && loss.grad_fn()->consumed) {
    throw StateError("graph already consumed; double backward is unsupported");
  }
  Tensor root = loss;
  root.grad_buffer()[0] += Scalar(1);
  Graph graph = Graph::capture(root);
  graph.run_backward();
}

}  // namespace dl
