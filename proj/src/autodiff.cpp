// SPDX-License-Identifier: Apache-2.0
#include "snerv/autodiff.hpp"

#include <sstream>
#include <unordered_set>

namespace snerv {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename Scalar>
Var<Scalar> Var<Scalar>::constant(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  return Var(std::move(node));
}

template <typename Scalar>
Var<Scalar> Var<Scalar>::parameter(std::string name, Tensor<Scalar> value) {
  if (name.empty()) throw UsageError("parameter name must be non-empty");
  auto node = std::make_shared<Node<Scalar>>();
  node->grad = Vec<Scalar>::Zero(value.size());
  node->value = std::move(value);
  node->requires_grad = true;
  node->param_name = std::move(name);
  return Var(std::move(node));
}

template <typename Scalar>
Scalar Var<Scalar>::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return value().data[0];
}

template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (g_no_grad) return Var<Scalar>(std::move(node));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return Var<Scalar>(std::move(node));
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward);
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Scalar>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<Scalar>* root = loss.node().get();
  root->accumulate(Vec<Scalar>::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
    if (!node->is_parameter()) node->grad.resize(0);
  }
}

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add(const std::string& name, Tensor<Scalar> value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Var<Scalar>::parameter(name, std::move(value)));
  return params_.back();
}

template <typename Scalar>
const Var<Scalar>& ParameterSet<Scalar>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename Scalar>
Index ParameterSet<Scalar>::total_elements() const {
  Index n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& p : params_) p.node()->grad.setZero(p.size());
}

#define SNERV_INSTANTIATE(S)                                                                    \
  template class Var<S>;                                                                        \
  template Var<S> make_result<S>(Tensor<S>, std::vector<Var<S>>, std::function<void(Node<S>&)>); \
  template void backward<S>(const Var<S>&);                                                     \
  template class ParameterSet<S>;

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
SNERV_INSTANTIATE(long double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
