#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deeplight/error.hpp"

namespace dl {

#ifdef DEEPLIGHT_DOUBLE
using Scalar = double;
#else
using Scalar = float;
#endif

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

/// Reference-counted handle to a dense row-major array that can take part in
/// a reverse-mode differentiation graph. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<Scalar> data() { return impl_->data; }
  std::span<const Scalar> data() const { return impl_->data; }
  Scalar item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Scalar> grad() const { return impl_->grad; }
  // Gradient buffer, allocated and zero-filled on first access.
  std::span<Scalar> grad_buffer();
  void zero_grad() { impl_->grad.clear(); }

  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }

  // Deep copy without graph history.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// One recorded operation. `inputs` keeps the differentiable operands alive;
/// `backward` reads the output gradient and accumulates into the inputs.
struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  std::function<void(std::span<const Scalar> grad_out)> backward;
  bool consumed = false;

  void release();
};

/// Creates the output tensor of an op and, when any input requires a
/// gradient, attaches a node holding `backward`.
Tensor make_result(Shape shape, std::vector<Scalar> values, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const Scalar>)> backward);

bool any_requires_grad(std::initializer_list<const Tensor*> tensors);

/// Topologically ordered view of the operations that produced a tensor.
class Graph {
 public:
  static Graph capture(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  // Runs the reverse sweep; nodes are released as they are visited.
  void run_backward();
  void clear();

 private:
  std::vector<std::shared_ptr<Node>> nodes_;             // producers before consumers
  std::vector<std::shared_ptr<TensorImpl>> outputs_;     // output of nodes_[i]
};

/// Accumulates d(loss)/dT into every requires_grad tensor reachable from the
/// scalar `loss`, then consumes the graph.
void backward(const Tensor& loss);

}  // namespace dl
