// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "snerv/tensor.hpp"

namespace snerv {

/// One vertex of the recorded computation graph.
///
/// `backward` reads `grad` (dL/d value) and accumulates into the inputs'
/// grads. Parameters are leaves with a persistent, zero-initialised grad.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Vec<Scalar> grad;
  bool requires_grad = false;
  std::string param_name;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_parameter() const { return !param_name.empty(); }

  /// grad += delta, allocating on first use.
  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& delta) {
    if (grad.size() == 0) {
      grad = delta;
    } else {
      grad += delta;
    }
  }
  Vec<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = Vec<Scalar>::Zero(value.size());
    return grad;
  }
};

/// Handle to a graph value. Copies share the underlying node.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor<Scalar> value);
  static Var parameter(std::string name, Tensor<Scalar> value);

  bool defined() const { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->param_name; }
  const Vec<Scalar>& grad() const { return node_->grad; }
  Vec<Scalar>& grad() { return node_->grad; }
  Scalar item() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

/// Builds an op result. When no input needs a gradient (or recording is off)
/// the result is a detached constant and `backward` is dropped.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward);

/// Reverse-mode sweep from a scalar loss. Parameter grads accumulate;
/// intermediate grads are released once propagated.
template <typename Scalar>
void backward(const Var<Scalar>& loss);

/// Ordered registry of the trainable tensors of one model instance.
template <typename Scalar>
class ParameterSet {
 public:
  /// Registers a new parameter; names must be unique within the set.
  Var<Scalar> add(const std::string& name, Tensor<Scalar> value);

  const std::vector<Var<Scalar>>& all() const { return params_; }
  std::vector<Var<Scalar>>& all() { return params_; }
  const Var<Scalar>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  Index total_elements() const;

  void zero_grad();

 private:
  std::vector<Var<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace snerv
