#include <algorithm>
#include <cmath>
#include <numbers>

#include "op_support.hpp"

namespace stcdit {

using detail::grad_of;
using detail::make_result;
using detail::Node;
using detail::shape_error;
using detail::value_of;

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, [factor](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t n = x.shape()[x.shape().rank() - 1];
  if (b.shape().rank() != 1 || b.shape()[0] != n) {
    shape_error(fmt::format("add_bias: {} + {}", x.shape().str(), b.shape().str()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return make_result<T>(x.shape(), std::move(out), {&x, &b}, [n](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  return make_result<T>(Shape{1}, {s}, {&a}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_error(fmt::format("matmul: {} x {}", a.shape().str(), b.shape().str()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result<T>(Shape{m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
    const T* A = value_of(self, 0).data();
    const T* B = value_of(self, 1).data();
    const T* G = self.grad.data();
    if (T* ga = grad_of(self, 0)) {  // G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (T* gb = grad_of(self, 1)) {  // A^T G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_bias(matmul(x, w), b);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape().rank() != 2) shape_error("transpose needs rank 2, got " + a.shape().str());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return make_result<T>(Shape{c, r}, std::move(out), {&a}, [r, c](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape.numel() != a.numel()) shape_error(fmt::format("reshape {} -> {}", a.shape().str(), shape.str()));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), {&a}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

namespace {

// Splits a shape around `axis` into (outer, axis extent, inner) strides.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView view_of(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.rank()) shape_error("concat axis out of range");
  std::vector<std::size_t> dims = first.dims();
  dims[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.rank() == first.rank();
    for (std::size_t i = 0; ok && i < s.rank(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) shape_error(fmt::format("concat: {} vs {} on axis {}", s.str(), first.str(), axis));
    dims[axis] += s[axis];
    extents.push_back(s[axis]);
  }
  const Shape out_shape(dims);
  const AxisView ov = view_of(out_shape, axis);
  std::vector<T> out(out_shape.numel());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const AxisView pv = view_of(p.shape(), axis);
    const std::size_t block = pv.extent * pv.inner;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(p.data().begin() + o * block, block, out.begin() + o * ov.extent * ov.inner + offset * ov.inner);
    }
    offset += pv.extent;
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = out_shape;
  node->value = std::move(out);
  for (const auto& p : parts) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward = [ov, extents](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < extents.size(); ++k) {
        const std::size_t block = extents[k] * ov.inner;
        if (T* g = grad_of(self, k)) {
          for (std::size_t o = 0; o < ov.outer; ++o) {
            const T* src = self.grad.data() + o * ov.extent * ov.inner + off * ov.inner;
            for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
          }
        }
        off += extents[k];
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, std::span<const std::size_t> sizes) {
  if (axis >= a.shape().rank()) shape_error("split axis out of range");
  const AxisView av = view_of(a.shape(), axis);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != av.extent) {
    shape_error(fmt::format("split sizes sum to {} but axis {} of {} has {}", total, axis, a.shape().str(), av.extent));
  }
  std::vector<Tensor<T>> parts;
  std::size_t offset = 0;
  for (std::size_t size : sizes) {
    std::vector<std::size_t> dims = a.shape().dims();
    dims[axis] = size;
    const std::size_t block = size * av.inner;
    std::vector<T> out(av.outer * block);
    for (std::size_t o = 0; o < av.outer; ++o) {
      std::copy_n(a.data().begin() + o * av.extent * av.inner + offset * av.inner, block, out.begin() + o * block);
    }
    parts.push_back(make_result<T>(Shape(dims), std::move(out), {&a}, [av, offset, block](Node<T>& self) {
      if (T* g = grad_of(self, 0)) {
        for (std::size_t o = 0; o < av.outer; ++o) {
          T* dst = g + o * av.extent * av.inner + offset * av.inner;
          for (std::size_t i = 0; i < block; ++i) dst[i] += self.grad[o * block + i];
        }
      }
    }));
    offset += size;
  }
  return parts;
}

template <typename T>
Tensor<T> take(const Tensor<T>& a, std::span<const std::size_t> indices, Shape shape) {
  if (shape.numel() != indices.size()) shape_error("take: index count does not match shape " + shape.str());
  std::vector<T> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.numel()) throw Error(ErrorCode::IndexOutOfRange, "take index out of range");
    out[i] = a[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result<T>(std::move(shape), std::move(out), {&a}, [idx = std::move(idx)](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / (T(1) + std::exp(-x[i]));
  return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const auto& xv = value_of(self, 0);
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv[i]));
        g[i] += self.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  return make_result<T>(x.shape(), std::move(out), {&x}, [inv_sqrt2](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const auto& xv = value_of(self, 0);
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T cdf = T(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * xv[i] * xv[i]);
        g[i] += self.grad[i] * (cdf + xv[i] * pdf);
      }
    }
  });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::size_t n = x.shape()[x.shape().rank() - 1];
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, [n, rows](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = self.value.data() + r * n;
        const T* gy = self.grad.data() + r * n;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> layernorm_lastdim(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t n = x.shape()[x.shape().rank() - 1];
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    shape_error(fmt::format("layernorm: {} with gain {} bias {}", x.shape().str(), gain.shape().str(), bias.shape().str()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (in[j] - mean) * inv_std[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gain[j] + bias[j];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &bias},
                        [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    const auto& gv = value_of(self, 1);
    const T* G = self.grad.data();
    if (T* gx = grad_of(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        T m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const T dh = G[r * n + j] * gv[j];
          m1 += dh;
          m2 += dh * xhat[r * n + j];
        }
        m1 /= T(n);
        m2 /= T(n);
        for (std::size_t j = 0; j < n; ++j) {
          const T dh = G[r * n + j] * gv[j];
          gx[r * n + j] += inv_std[r] * (dh - m1 - xhat[r * n + j] * m2);
        }
      }
    }
    if (T* gg = grad_of(self, 1)) {
      for (std::size_t i = 0; i < rows * n; ++i) gg[i % n] += G[i] * xhat[i];
    }
    if (T* gb = grad_of(self, 2)) {
      for (std::size_t i = 0; i < rows * n; ++i) gb[i % n] += G[i];
    }
  });
}

RopeBands RopeBands::for_dim(std::size_t dim) {
  if (dim % 2 != 0) shape_error(fmt::format("rope dim {} is odd", dim));
  RopeBands b;
  b.temporal = (dim / 2) - (dim / 2) % 2;
  const std::size_t rest = dim - b.temporal;
  b.height = rest / 2;
  b.width = rest - b.height;
  if (b.height % 2 != 0 || b.width % 2 != 0) {
    shape_error(fmt::format("rope dim {} gives odd spatial bands {}+{}", dim, b.height, b.width));
  }
  return b;
}

namespace {

// Per-token rotation angles for each rotated pair, shared by forward and backward.
std::vector<double> rope_angles(std::span<const SpacetimeIndex> positions, std::size_t dim) {
  const RopeBands bands = RopeBands::for_dim(dim);
  const std::size_t pairs = dim / 2;
  std::vector<double> angles(positions.size() * pairs);
  const std::size_t band_dims[3] = {bands.temporal, bands.height, bands.width};
  for (std::size_t tok = 0; tok < positions.size(); ++tok) {
    const int pos[3] = {positions[tok].t, positions[tok].h, positions[tok].w};
    std::size_t pair = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const std::size_t bd = band_dims[axis];
      for (std::size_t k = 0; k < bd / 2; ++k, ++pair) {
        const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(k) / static_cast<double>(bd));
        angles[tok * pairs + pair] = static_cast<double>(pos[axis]) * freq;
      }
    }
  }
  return angles;
}

}  // namespace

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::span<const SpacetimeIndex> positions) {
  if (x.shape().rank() != 2 || x.shape()[0] != positions.size()) {
    shape_error(fmt::format("rope_apply: {} with {} positions", x.shape().str(), positions.size()));
  }
  const std::size_t dim = x.shape()[1];
  const std::size_t pairs = dim / 2;
  auto angles = rope_angles(positions, dim);
  std::vector<T> out(x.numel());
  for (std::size_t tok = 0; tok < positions.size(); ++tok) {
    for (std::size_t p = 0; p < pairs; ++p) {
      const T c = static_cast<T>(std::cos(angles[tok * pairs + p]));
      const T s = static_cast<T>(std::sin(angles[tok * pairs + p]));
      const std::size_t i = tok * dim + 2 * p;
      out[i] = x[i] * c - x[i + 1] * s;
      out[i + 1] = x[i] * s + x[i + 1] * c;
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x},
                        [dim, pairs, angles = std::move(angles)](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const std::size_t tokens = self.grad.size() / dim;
      for (std::size_t tok = 0; tok < tokens; ++tok) {
        for (std::size_t p = 0; p < pairs; ++p) {
          const T c = static_cast<T>(std::cos(angles[tok * pairs + p]));
          const T s = static_cast<T>(std::sin(angles[tok * pairs + p]));
          const std::size_t i = tok * dim + 2 * p;
          g[i] += self.grad[i] * c + self.grad[i + 1] * s;
          g[i + 1] += -self.grad[i] * s + self.grad[i + 1] * c;
        }
      }
    }
  });
}

#define INSTANTIATE(T)                                                                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                       \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                            \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);                             \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, std::size_t, std::span<const std::size_t>); \
  template Tensor<T> take<T>(const Tensor<T>&, std::span<const std::size_t>, Shape);                 \
  template Tensor<T> silu<T>(const Tensor<T>&);                                                      \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                      \
  template Tensor<T> softmax_lastdim<T>(const Tensor<T>&);                                           \
  template Tensor<T> layernorm_lastdim<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> rope_apply<T>(const Tensor<T>&, std::span<const SpacetimeIndex>);
STCDIT_INSTANTIATE_FLOATING(INSTANTIATE)
#undef INSTANTIATE

}  // namespace stcdit
