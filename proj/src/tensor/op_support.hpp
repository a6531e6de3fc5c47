#pragma once

#include <string>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/tensor.hpp"

namespace stcdit::detail {

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

/// Wraps an op result; links parents and the backward closure only when some
/// input needs a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::initializer_list<const Tensor<T>*> inputs,
                      BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const Tensor<T>* in : inputs) {
    if (in->requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Tensor<T>* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

/// Parent gradient buffer, or nullptr when the parent takes no gradient.
template <typename T>
T* grad_of(Node<T>& self, std::size_t parent) {
  Node<T>& p = *self.parents[parent];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

template <typename T>
const std::vector<T>& value_of(const Node<T>& self, std::size_t parent) {
  return self.parents[parent]->value;
}

[[noreturn]] inline void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    shape_error(fmt::format("{}: {} vs {}", op, a.shape().str(), b.shape().str()));
  }
}

}  // namespace stcdit::detail

#define STCDIT_INSTANTIATE_FLOATING(MACRO) \
  MACRO(float)                             \
  MACRO(double)
