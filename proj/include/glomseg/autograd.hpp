#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "glomseg/tensor.hpp"

namespace glomseg {

/// One vertex of the reverse-mode graph.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  /// Reads self.grad and accumulates into the inputs' gradients.
  std::function<void(Node& self)> backward;

  /// Zero-filled gradient buffer, allocated on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph value. Copies share the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and checkpoint loading; bypasses the graph.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();
  /// Returns a leaf holding the same value with no history.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Back-propagates from a scalar root through every recorded op.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps an op result. Records `backward` only when recording is enabled and
/// some input requires a gradient.
Var make_result(Tensor value, const std::vector<Var>& inputs,
                std::function<void(Node& self)> backward);

}  // namespace glomseg
