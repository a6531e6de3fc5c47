#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "stcdit/verify.hpp"

namespace stcdit::verify {

std::vector<double> ref_dconv3x3(std::span<const double> x, std::size_t c, std::size_t f, std::size_t h,
                                 std::size_t w, std::span<const double> k, std::span<const double> b) {
  std::vector<double> out(c * f * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < f; ++t) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = b[ch];
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long sy = static_cast<long>(y) + dy;
              const long sx = static_cast<long>(xx) + dx;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
              acc += k[ch * 9 + static_cast<std::size_t>((dy + 1) * 3 + dx + 1)] *
                     x[((ch * f + t) * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
          }
          out[((ch * f + t) * h + y) * w + xx] = acc;
        }
      }
    }
  }
  return out;
}

std::vector<double> ref_pconv1x1(std::span<const double> x, std::size_t cin, std::size_t n,
                                 std::span<const double> wt, std::span<const double> b, std::size_t cout) {
  std::vector<double> out(cout * n);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = b[o];
      for (std::size_t c = 0; c < cin; ++c) acc += wt[o * cin + c] * x[c * n + i];
      out[o * n + i] = acc;
    }
  }
  return out;
}

std::vector<double> ref_tconv2x2s2(std::span<const double> x, std::size_t cin, std::size_t f, std::size_t h,
                                   std::size_t w, std::span<const double> wt, std::span<const double> b,
                                   std::size_t cout) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  std::vector<double> out(cout * f * oh * ow);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < f; ++t) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < 2; ++ky) {
              for (std::size_t kx = 0; kx < 2; ++kx) {
                acc += wt[((o * cin + c) * 2 + ky) * 2 + kx] * x[((c * f + t) * h + 2 * y + ky) * w + 2 * xx + kx];
              }
            }
          }
          out[((o * f + t) * oh + y) * ow + xx] = acc;
        }
      }
    }
  }
  return out;
}

std::vector<double> ref_maxpool2(std::span<const double> x, std::size_t c, std::size_t f, std::size_t h,
                                 std::size_t w) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  std::vector<double> out(c * f * oh * ow);
  for (std::size_t p = 0; p < c * f; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t ky = 0; ky < 2; ++ky) {
          for (std::size_t kx = 0; kx < 2; ++kx) m = std::max(m, x[(p * h + 2 * y + ky) * w + 2 * xx + kx]);
        }
        out[(p * oh + y) * ow + xx] = m;
      }
    }
  }
  return out;
}

std::vector<double> ref_rope(std::span<const double> x, std::size_t tokens, std::size_t dim,
                             std::span<const SpacetimeIndex> positions) {
  const std::size_t temporal = (dim / 2) / 2 * 2;
  const std::size_t height = (dim - temporal) / 2;
  const std::size_t bands[3] = {temporal, height, dim - temporal - height};
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t n = 0; n < tokens; ++n) {
    const double pos[3] = {static_cast<double>(positions[n].t), static_cast<double>(positions[n].h),
                           static_cast<double>(positions[n].w)};
    std::size_t offset = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const std::size_t band = bands[axis];
      for (std::size_t i = 0; i < band; i += 2) {
        const double freq = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(band));
        const std::complex<double> z(x[n * dim + offset + i], x[n * dim + offset + i + 1]);
        const std::complex<double> r = z * std::polar(1.0, pos[axis] * freq);
        out[n * dim + offset + i] = r.real();
        out[n * dim + offset + i + 1] = r.imag();
      }
      offset += band;
    }
  }
  return out;
}

namespace {

std::vector<double> project(std::span<const double> x, std::size_t n, std::size_t dim, const Tensor64& wt,
                            const Tensor64& b) {
  const std::size_t out_dim = wt.shape()[1];
  std::vector<double> out(n * out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < dim; ++k) acc += x[i * dim + k] * wt[k * out_dim + o];
      out[i * out_dim + o] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<double> ref_attention(std::span<const double> queries, std::size_t nq,
                                  std::span<const double> keys_values, std::size_t nk, std::size_t dim,
                                  const AttentionWeights<double>& w, std::size_t heads,
                                  std::span<const SpacetimeIndex> query_positions,
                                  std::span<const SpacetimeIndex> key_positions) {
  const auto q = project(queries, nq, dim, w.wq, w.bq);
  const auto k = project(keys_values, nk, dim, w.wk, w.bk);
  const auto v = project(keys_values, nk, dim, w.wv, w.bv);
  const std::size_t hd = dim / heads;
  std::vector<double> mixed(nq * dim, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> qh(nq * hd), kh(nk * hd);
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < hd; ++j) qh[i * hd + j] = q[i * dim + h * hd + j];
    }
    for (std::size_t i = 0; i < nk; ++i) {
      for (std::size_t j = 0; j < hd; ++j) kh[i * hd + j] = k[i * dim + h * hd + j];
    }
    if (!query_positions.empty()) qh = ref_rope(qh, nq, hd, query_positions);
    if (!key_positions.empty()) kh = ref_rope(kh, nk, hd, key_positions);
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> scores(nk);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < hd; ++d) dot += qh[i * hd + d] * kh[j * hd + d];
        scores[j] = dot / std::sqrt(static_cast<double>(hd));
        top = std::max(top, scores[j]);
      }
      double total = 0.0;
      for (double& s : scores) total += (s = std::exp(s - top));
      for (std::size_t j = 0; j < nk; ++j) {
        for (std::size_t d = 0; d < hd; ++d) mixed[i * dim + h * hd + d] += scores[j] / total * v[j * dim + h * hd + d];
      }
    }
  }
  return project(mixed, nq, dim, w.wo, w.bo);
}

}  // namespace stcdit::verify
