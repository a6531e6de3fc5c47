#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "op_support.hpp"

namespace stcdit {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 5) {
    detail::shape_error(fmt::format("rank {} outside 1..5", dims_.size()));
  }
  for (std::size_t d : dims_) {
    if (d < 1) detail::shape_error("zero extent in shape " + str());
  }
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) s += (i ? "," : "") + std::to_string(dims_[i]);
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.numel() != data.size()) {
    detail::shape_error(fmt::format("shape {} needs {} values, got {}", shape.str(), shape.numel(), data.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape.numel();
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) detail::shape_error("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

template <typename T>
GradTape<T>::GradTape(const Tensor<T>& output) : root_(output.node()) {
  // Iterative post-order DFS gives a topological order; reverse it.
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  if (root_->requires_grad) {
    stack.emplace_back(root_.get(), 0);
    seen.insert(root_.get());
  }
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      detail::Node<T>* p = node->parents[next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order_.begin(), order_.end());
}

template <typename T>
void GradTape<T>::backward() {
  for (detail::Node<T>* n : order_) n->grad.assign(n->value.size(), T(0));
  if (order_.empty()) return;
  std::fill(root_->grad.begin(), root_->grad.end(), T(1));
  for (detail::Node<T>* n : order_) {
    if (n->backward) n->backward(*n);
  }
}

template <typename T>
void backward(const Tensor<T>& output) {
  if (output.numel() != 1) detail::shape_error("backward needs a single-element output, got " + output.shape().str());
  GradTape<T>(output).backward();
}

template <typename T>
Tensor<T> uniform(Shape shape, T lo, T hi, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape.numel());
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
Tensor<T> randn(Shape shape, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(shape.numel());
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                    [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor64& x, double eps, std::size_t max_samples,
                           std::uint64_t seed) {
  const Tensor64 leaf = x.detach(true);
  const Tensor64 y = f(leaf);
  backward(y);
  std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  if (analytic.empty()) analytic.assign(leaf.numel(), 0.0);

  std::vector<std::size_t> coords(leaf.numel());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (max_samples > 0 && max_samples < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_samples);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(Tensor64(x.shape(), probe)).item();
    probe[i] = orig - eps;
    const double down = f(Tensor64(x.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (rel > result.max_rel_error || result.checked == 0) {
      result.max_rel_error = std::max(result.max_rel_error, rel);
      if (rel >= result.max_rel_error) {
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
    ++result.checked;
  }
  return result;
}

#define INSTANTIATE(T)                                                                            \
  template class Tensor<T>;                                                                       \
  template class GradTape<T>;                                                                     \
  template void backward<T>(const Tensor<T>&);                                                    \
  template Tensor<T> uniform<T>(Shape, T, T, std::mt19937_64&, bool);                             \
  template Tensor<T> randn<T>(Shape, std::mt19937_64&, bool);                                     \
  template double max_abs_diff<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template bool bit_equal<T>(const Tensor<T>&, const Tensor<T>&);
STCDIT_INSTANTIATE_FLOATING(INSTANTIATE)
#undef INSTANTIATE

}  // namespace stcdit
