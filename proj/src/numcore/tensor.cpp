// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/numcore/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace referee::numcore {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values,
                          bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("tensor dimensions must be positive, got " +
                       shape_to_string(shape));
    }
  }
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a single element, shape is " +
                     shape_to_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar, shape is " +
                     shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      NodePtr child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr n = *it;
    if (n->backward && !n->grad.empty()) {
      for (auto& in : n->inputs) {
        if (in->requires_grad) in->ensure_grad();
      }
      n->backward(*n);
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), std::vector<T>(node_->value.begin(), node_->value.end()), false);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void Tensor<T>::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < node_->value.size(); ++i) {
    if (!std::isfinite(node_->value[i])) {
      throw NumericError("non-finite value in " + what + " at flat index " +
                         std::to_string(i));
    }
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(Shape, Buffer<float>,
                                   std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, Buffer<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace referee::numcore
