#include <algorithm>
#include <limits>

#include "op_support.hpp"

namespace stcdit {

using detail::grad_of;
using detail::make_result;
using detail::Node;
using detail::shape_error;
using detail::value_of;

namespace {

// [C, H, W] is treated as [C, 1, H, W].
struct FeatureDims {
  std::size_t channels = 0;
  std::size_t frames = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  bool has_frames = false;

  std::size_t plane() const { return height * width; }
};

FeatureDims feature_dims(const Shape& s, const char* op) {
  FeatureDims d;
  if (s.rank() == 3) {
    d = {s[0], 1, s[1], s[2], false};
  } else if (s.rank() == 4) {
    d = {s[0], s[1], s[2], s[3], true};
  } else {
    shape_error(fmt::format("{}: expected [C,H,W] or [C,F,H,W], got {}", op, s.str()));
  }
  return d;
}

Shape feature_shape(const FeatureDims& d, std::size_t channels, std::size_t h, std::size_t w) {
  return d.has_frames ? Shape{channels, d.frames, h, w} : Shape{channels, h, w};
}

}  // namespace

template <typename T>
Tensor<T> dconv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const FeatureDims d = feature_dims(x.shape(), "dconv3x3");
  if (w.shape() != Shape{d.channels, 3, 3} || b.shape() != Shape{d.channels}) {
    shape_error(fmt::format("dconv3x3: input {} weight {} bias {}", x.shape().str(), w.shape().str(), b.shape().str()));
  }
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  std::vector<T> out(x.numel());
  for (std::size_t c = 0; c < d.channels; ++c) {
    const T* k = w.data().data() + c * 9;
    for (std::size_t f = 0; f < d.frames; ++f) {
      const std::size_t base = (c * d.frames + f) * d.plane();
      const T* in = x.data().data() + base;
      T* o = out.data() + base;
      for (long y = 0; y < H; ++y) {
        for (long xx = 0; xx < W; ++xx) {
          T acc = b[c];
          for (long ky = 0; ky < 3; ++ky) {
            const long sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            for (long kx = 0; kx < 3; ++kx) {
              const long sx = xx + kx - 1;
              if (sx < 0 || sx >= W) continue;
              acc += k[ky * 3 + kx] * in[sy * W + sx];
            }
          }
          o[y * W + xx] = acc;
        }
      }
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &w, &b}, [d, H, W](Node<T>& self) {
    const T* in_all = value_of(self, 0).data();
    const T* w_all = value_of(self, 1).data();
    T* gx = grad_of(self, 0);
    T* gw = grad_of(self, 1);
    T* gb = grad_of(self, 2);
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t f = 0; f < d.frames; ++f) {
        const std::size_t base = (c * d.frames + f) * d.plane();
        const T* g = self.grad.data() + base;
        const T* in = in_all + base;
        for (long y = 0; y < H; ++y) {
          for (long xx = 0; xx < W; ++xx) {
            const T go = g[y * W + xx];
            if (gb) gb[c] += go;
            for (long ky = 0; ky < 3; ++ky) {
              const long sy = y + ky - 1;
              if (sy < 0 || sy >= H) continue;
              for (long kx = 0; kx < 3; ++kx) {
                const long sx = xx + kx - 1;
                if (sx < 0 || sx >= W) continue;
                if (gx) gx[base + sy * W + sx] += w_all[c * 9 + ky * 3 + kx] * go;
                if (gw) gw[c * 9 + ky * 3 + kx] += in[sy * W + sx] * go;
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> pconv1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.shape().rank() < 2 || w.shape().rank() != 2 || w.shape()[1] != x.shape()[0] ||
      b.shape() != Shape{w.shape()[0]}) {
    shape_error(fmt::format("pconv1x1: input {} weight {} bias {}", x.shape().str(), w.shape().str(), b.shape().str()));
  }
  const std::size_t cin = x.shape()[0], cout = w.shape()[0];
  const std::size_t positions = x.numel() / cin;
  std::vector<std::size_t> dims = x.shape().dims();
  dims[0] = cout;
  std::vector<T> out(cout * positions);
  for (std::size_t o = 0; o < cout; ++o) {
    T* row = out.data() + o * positions;
    std::fill(row, row + positions, b[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const T wv = w[o * cin + i];
      const T* in = x.data().data() + i * positions;
      for (std::size_t p = 0; p < positions; ++p) row[p] += wv * in[p];
    }
  }
  return make_result<T>(Shape(dims), std::move(out), {&x, &w, &b}, [cin, cout, positions](Node<T>& self) {
    const T* X = value_of(self, 0).data();
    const T* Wt = value_of(self, 1).data();
    const T* G = self.grad.data();
    T* gx = grad_of(self, 0);
    T* gw = grad_of(self, 1);
    T* gb = grad_of(self, 2);
    for (std::size_t o = 0; o < cout; ++o) {
      const T* go = G + o * positions;
      if (gb) {
        for (std::size_t p = 0; p < positions; ++p) gb[o] += go[p];
      }
      for (std::size_t i = 0; i < cin; ++i) {
        if (gx) {
          const T wv = Wt[o * cin + i];
          for (std::size_t p = 0; p < positions; ++p) gx[i * positions + p] += wv * go[p];
        }
        if (gw) {
          T acc = 0;
          for (std::size_t p = 0; p < positions; ++p) acc += X[i * positions + p] * go[p];
          gw[o * cin + i] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> tconv2x2s2(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const FeatureDims d = feature_dims(x.shape(), "tconv2x2s2");
  if (d.height % 2 || d.width % 2) shape_error("tconv2x2s2 needs even H and W, got " + x.shape().str());
  if (w.shape().rank() != 4 || w.shape()[1] != d.channels || w.shape()[2] != 2 || w.shape()[3] != 2 ||
      b.shape() != Shape{w.shape()[0]}) {
    shape_error(fmt::format("tconv2x2s2: input {} weight {} bias {}", x.shape().str(), w.shape().str(), b.shape().str()));
  }
  const std::size_t cin = d.channels, cout = w.shape()[0];
  const std::size_t oh = d.height / 2, ow = d.width / 2, W = d.width;
  std::vector<T> out(cout * d.frames * oh * ow);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t f = 0; f < d.frames; ++f) {
      T* dst = out.data() + (o * d.frames + f) * oh * ow;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          T acc = b[o];
          for (std::size_t i = 0; i < cin; ++i) {
            const T* in = x.data().data() + (i * d.frames + f) * d.plane();
            const T* k = w.data().data() + (o * cin + i) * 4;
            acc += k[0] * in[(2 * y) * W + 2 * xx] + k[1] * in[(2 * y) * W + 2 * xx + 1] +
                   k[2] * in[(2 * y + 1) * W + 2 * xx] + k[3] * in[(2 * y + 1) * W + 2 * xx + 1];
          }
          dst[y * ow + xx] = acc;
        }
      }
    }
  }
  return make_result<T>(feature_shape(d, cout, oh, ow), std::move(out), {&x, &w, &b},
                        [d, cin, cout, oh, ow, W](Node<T>& self) {
    const T* X = value_of(self, 0).data();
    const T* Wt = value_of(self, 1).data();
    T* gx = grad_of(self, 0);
    T* gw = grad_of(self, 1);
    T* gb = grad_of(self, 2);
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t f = 0; f < d.frames; ++f) {
        const T* g = self.grad.data() + (o * d.frames + f) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const T go = g[y * ow + xx];
            if (gb) gb[o] += go;
            for (std::size_t i = 0; i < cin; ++i) {
              const std::size_t base = (i * d.frames + f) * d.plane();
              const std::size_t idx[4] = {base + (2 * y) * W + 2 * xx, base + (2 * y) * W + 2 * xx + 1,
                                          base + (2 * y + 1) * W + 2 * xx, base + (2 * y + 1) * W + 2 * xx + 1};
              for (std::size_t k = 0; k < 4; ++k) {
                if (gx) gx[idx[k]] += Wt[(o * cin + i) * 4 + k] * go;
                if (gw) gw[(o * cin + i) * 4 + k] += X[idx[k]] * go;
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  const FeatureDims d = feature_dims(x.shape(), "maxpool2");
  if (d.height % 2 || d.width % 2) shape_error("maxpool2 needs even H and W, got " + x.shape().str());
  const std::size_t oh = d.height / 2, ow = d.width / 2, W = d.width;
  const std::size_t planes = d.channels * d.frames;
  std::vector<T> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const std::size_t base = pl * d.plane();
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t cand[4] = {base + (2 * y) * W + 2 * xx, base + (2 * y) * W + 2 * xx + 1,
                                     base + (2 * y + 1) * W + 2 * xx, base + (2 * y + 1) * W + 2 * xx + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (x[cand[k]] > x[best]) best = cand[k];
        }
        const std::size_t o = (pl * oh + y) * ow + xx;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>(feature_shape(d, d.channels, oh, ow), std::move(out), {&x},
                        [argmax = std::move(argmax)](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
    }
  });
}

#define INSTANTIATE(T)                                                                  \
  template Tensor<T> dconv3x3<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> pconv1x1<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> tconv2x2s2<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> maxpool2<T>(const Tensor<T>&);
STCDIT_INSTANTIATE_FLOATING(INSTANTIATE)
#undef INSTANTIATE

}  // namespace stcdit
