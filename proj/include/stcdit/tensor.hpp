#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stcdit {

/// Tensor extents, 1 to 5 axes, each >= 1. Video layout is C x F x H x W.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this node's grad into its parents.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

/// Dense row-major tensor handle. The value is immutable once built; ops
/// record a backward closure when any input requires a gradient.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value) { return full(Shape{1}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value; }
  T operator[](std::size_t flat) const { return node_->value[flat]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient from the latest backward pass; empty if none reached this tensor.
  std::span<const T> grad() const { return node_->grad; }

  /// Same values, fresh leaf with the given grad flag.
  Tensor detach(bool requires_grad = false) const { return Tensor(shape(), node_->value, requires_grad); }

  template <typename U>
  Tensor<U> cast(bool requires_grad = false) const {
    return Tensor<U>(shape(), std::vector<U>(node_->value.begin(), node_->value.end()), requires_grad);
  }

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodePtr node_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

/// Reverse topological record of every node that needs a gradient below an
/// output. Each node appears exactly once.
template <typename T>
class GradTape {
 public:
  explicit GradTape(const Tensor<T>& output);

  std::size_t size() const { return order_.size(); }
  /// Clears recorded grads, seeds d(output) = 1 and runs every backward closure.
  void backward();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<detail::Node<T>*> order_;
};

/// Gradients of a single-element output with respect to every leaf that
/// requires them. Throws ShapeMismatch for non-scalar outputs.
template <typename T>
void backward(const Tensor<T>& output);

// ---- elementwise and structural ops --------------------------------------
// All shape mismatches throw ShapeMismatch. No broadcasting except add_bias.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// x[..., n] + b[n].
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
/// [m, k] x [k, n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[n, k] w[k, m] + b[m].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// Rank-2 transpose.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, std::span<const std::size_t> sizes);
/// out.flat[i] = a.flat[indices[i]]; the differentiable form of any re-layout.
template <typename T> Tensor<T> take(const Tensor<T>& a, std::span<const std::size_t> indices, Shape shape);

template <typename T> Tensor<T> silu(const Tensor<T>& x);
/// Exact erf form.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);
template <typename T>
Tensor<T> layernorm_lastdim(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-6));

// ---- convolution family ---------------------------------------------------
// Inputs are [C, H, W] or [C, F, H, W]; the F axis is a batch axis.

/// 3x3 depthwise, zero padding 1, stride 1. w[C, 3, 3], b[C].
template <typename T> Tensor<T> dconv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// 1x1 pointwise. x[Cin, ...], w[Cout, Cin], b[Cout].
template <typename T> Tensor<T> pconv1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// 2x2 stride-2 dense convolution. w[Cout, Cin, 2, 2], b[Cout]. H, W even.
template <typename T> Tensor<T> tconv2x2s2(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// 2x2 stride-2 max pooling. H, W even.
template <typename T> Tensor<T> maxpool2(const Tensor<T>& x);

// ---- rotary position embedding ---------------------------------------------

struct SpacetimeIndex {
  int t = 0;
  int h = 0;
  int w = 0;
  friend bool operator==(const SpacetimeIndex&, const SpacetimeIndex&) = default;
};

/// Contiguous rotary bands over a head dimension: temporal gets dim/2 rounded
/// down to even, the two spatial axes split the rest.
struct RopeBands {
  std::size_t temporal = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  /// Throws ShapeMismatch if dim or any band is odd.
  static RopeBands for_dim(std::size_t dim);
};

inline constexpr double kRopeBase = 10000.0;

/// x[tokens, dim]; adjacent pairs in each band rotate by pos * base^(-2k/band).
template <typename T> Tensor<T> rope_apply(const Tensor<T>& x, std::span<const SpacetimeIndex> positions);

// ---- helpers ---------------------------------------------------------------

template <typename T> Tensor<T> uniform(Shape shape, T lo, T hi, std::mt19937_64& rng, bool requires_grad = false);
template <typename T> Tensor<T> randn(Shape shape, std::mt19937_64& rng, bool requires_grad = false);
template <typename T> double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> bool bit_equal(const Tensor<T>& a, const Tensor<T>& b);

// ---- finite-difference checking ---------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Tensor64(const Tensor64&)>;

/// Central differences in 64-bit against reverse mode. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8), maximised over the checked coordinates.
/// max_samples > 0 restricts the check to a seeded subset of coordinates.
GradCheckResult grad_check(const ScalarFn& f, const Tensor64& x, double eps = 1e-5,
                           std::size_t max_samples = 0, std::uint64_t seed = 0);

}  // namespace stcdit
