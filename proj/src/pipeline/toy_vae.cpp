#include <cmath>
#include <random>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/pipeline.hpp"

namespace stcdit {

namespace {

struct Layout {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t s = 0;
  std::size_t channels = 0;  // latent channels
  std::size_t k = 0;         // 3 s^2
  std::size_t lw() const { return width / s; }
  std::size_t lh() const { return height / s; }
  std::size_t plane() const { return width * height; }
  std::size_t latent_plane() const { return lw() * lh(); }
};

using Planes = std::vector<float>;  // [3, H, W]

void validate(const ToyVaeConfig& cfg) {
  if (cfg.temporal_stride < 1 || cfg.spatial_stride < 1) {
    throw Error(ErrorCode::InvalidConfig, "codec strides must be at least 1");
  }
  const int k = 3 * cfg.spatial_stride * cfg.spatial_stride;
  if (cfg.latent_channels < k) {
    throw Error(ErrorCode::InvalidConfig,
                fmt::format("{} latent channels cannot hold {} values per latent pixel", cfg.latent_channels, k));
  }
}

Layout make_layout(std::size_t height, std::size_t width, const ToyVaeConfig& cfg) {
  Layout l{width, height, static_cast<std::size_t>(cfg.spatial_stride), static_cast<std::size_t>(cfg.latent_channels),
           static_cast<std::size_t>(3 * cfg.spatial_stride * cfg.spatial_stride)};
  if (height % l.s != 0 || width % l.s != 0) {
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("frame {}x{} is not divisible by spatial stride {}", width, height, l.s));
  }
  return l;
}

// Writes T(planes) into latent slot `slot` of a [C, f, h, w] buffer.
void forward_transform(const Planes& in, const Layout& l, const std::vector<double>& q, std::vector<float>& latent,
                       std::size_t frames, std::size_t slot) {
  std::vector<double> v(l.k);
  for (std::size_t y = 0; y < l.lh(); ++y) {
    for (std::size_t x = 0; x < l.lw(); ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t dy = 0; dy < l.s; ++dy) {
          for (std::size_t dx = 0; dx < l.s; ++dx) {
            v[(ch * l.s + dy) * l.s + dx] = in[ch * l.plane() + (y * l.s + dy) * l.width + x * l.s + dx];
          }
        }
      }
      for (std::size_t c = 0; c < l.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < l.k; ++i) acc += q[c * l.k + i] * v[i];
        latent[((c * frames + slot) * l.lh() + y) * l.lw() + x] = static_cast<float>(acc);
      }
    }
  }
}

Planes inverse_transform(std::span<const float> latent, const Layout& l, const std::vector<double>& q,
                         std::size_t frames, std::size_t slot) {
  Planes out(3 * l.plane());
  std::vector<double> z(l.channels);
  for (std::size_t y = 0; y < l.lh(); ++y) {
    for (std::size_t x = 0; x < l.lw(); ++x) {
      for (std::size_t c = 0; c < l.channels; ++c) z[c] = latent[((c * frames + slot) * l.lh() + y) * l.lw() + x];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t dy = 0; dy < l.s; ++dy) {
          for (std::size_t dx = 0; dx < l.s; ++dx) {
            const std::size_t i = (ch * l.s + dy) * l.s + dx;
            double acc = 0.0;
            for (std::size_t c = 0; c < l.channels; ++c) acc += q[c * l.k + i] * z[c];
            out[ch * l.plane() + (y * l.s + dy) * l.width + x * l.s + dx] = static_cast<float>(acc);
          }
        }
      }
    }
  }
  return out;
}

// Bilinear sample of ref at c + m (p - c). `valid` marks pixels whose source
// lies inside the frame; outside sources replicate the border.
Planes warp(const Planes& ref, const Layout& l, const AffineMatrix& m, std::vector<bool>& valid) {
  Planes out(ref.size());
  valid.assign(l.plane(), true);
  const double cx = (static_cast<double>(l.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(l.height) - 1.0) / 2.0;
  const int w = static_cast<int>(l.width);
  const int h = static_cast<int>(l.height);
  constexpr double kSlack = 1e-9;
  auto at = [&](std::size_t ch, int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return ref[ch * l.plane() + static_cast<std::size_t>(y) * l.width + static_cast<std::size_t>(x)];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 src = m.apply({x - cx, y - cy});
      const double sx = src.x + cx;
      const double sy = src.y + cy;
      const std::size_t idx = static_cast<std::size_t>(y) * l.width + static_cast<std::size_t>(x);
      valid[idx] = sx > -kSlack && sy > -kSlack && sx < w - 1 + kSlack && sy < h - 1 + kSlack;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = at(ch, x0, y0) * (1.0 - ax) + at(ch, x0 + 1, y0) * ax;
        const double bottom = at(ch, x0, y0 + 1) * (1.0 - ax) + at(ch, x0 + 1, y0 + 1) * ax;
        out[ch * l.plane() + idx] = static_cast<float>(top * (1.0 - ay) + bottom * ay);
      }
    }
  }
  return out;
}

AffineMatrix power(const AffineMatrix& m, int n) {
  AffineMatrix acc = AffineMatrix::identity();
  for (int i = 0; i < n; ++i) acc = m.after(acc);
  return acc;
}

// Frame d of `stride` between keyframes prev and next. A pixel seen by only
// one warped keyframe takes that value; otherwise the two blend linearly.
Planes interpolate(const Planes& prev, const Planes& next, const Layout& l, const MotionParams& motion, int d,
                   int stride) {
  const AffineMatrix forward = compose_similarity(motion);
  const AffineMatrix backward = forward.inverse();
  std::vector<bool> valid_prev, valid_next;
  const Planes from_prev = warp(prev, l, power(backward, d), valid_prev);
  const Planes from_next = warp(next, l, power(forward, stride - d), valid_next);
  const double blend = static_cast<double>(d) / stride;
  Planes out(prev.size());
  for (std::size_t i = 0; i < l.plane(); ++i) {
    double wn = blend;
    if (valid_prev[i] != valid_next[i]) wn = valid_next[i] ? 1.0 : 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t k = ch * l.plane() + i;
      out[k] = static_cast<float>((1.0 - wn) * from_prev[k] + wn * from_next[k]);
    }
  }
  return out;
}

Planes frame_planes(std::span<const float> data, const Layout& l, std::size_t frames, std::size_t t) {
  Planes out(3 * l.plane());
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const std::size_t off = (ch * frames + t) * l.plane();
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(off),
              data.begin() + static_cast<std::ptrdiff_t>(off + l.plane()),
              out.begin() + static_cast<std::ptrdiff_t>(ch * l.plane()));
  }
  return out;
}

void store_planes(const Planes& p, const Layout& l, std::vector<float>& data, std::size_t frames, std::size_t t) {
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(ch * l.plane()),
              p.begin() + static_cast<std::ptrdiff_t>((ch + 1) * l.plane()),
              data.begin() + static_cast<std::ptrdiff_t>((ch * frames + t) * l.plane()));
  }
}

}  // namespace

std::vector<double> toy_vae_basis(const ToyVaeConfig& cfg) {
  validate(cfg);
  const std::size_t c = static_cast<std::size_t>(cfg.latent_channels);
  const std::size_t k = static_cast<std::size_t>(3 * cfg.spatial_stride * cfg.spatial_stride);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  std::vector<double> q(c * k);
  for (double& v : q) v = normal(rng);
  // Orthonormalise the k columns (length c) in place.
  for (std::size_t j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (std::size_t r = 0; r < c; ++r) dot += q[r * k + i] * q[r * k + j];
        for (std::size_t r = 0; r < c; ++r) q[r * k + j] -= dot * q[r * k + i];
      }
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < c; ++r) norm += q[r * k + j] * q[r * k + j];
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < c; ++r) q[r * k + j] /= norm;
  }
  return q;
}

Tensor32 toy_vae_transform(const Tensor32& frame, const ToyVaeConfig& cfg) {
  const Shape& s = frame.shape();
  const bool rank3 = s.rank() == 3;
  if (!(rank3 || (s.rank() == 4 && s[1] == 1)) || s[0] != 3) {
    throw Error(ErrorCode::ShapeMismatch, "transform input must be [3, H, W] or [3, 1, H, W], got " + s.str());
  }
  const std::size_t h = rank3 ? s[1] : s[2];
  const std::size_t w = rank3 ? s[2] : s[3];
  const Layout l = make_layout(h, w, cfg);
  const auto q = toy_vae_basis(cfg);
  std::vector<float> latent(l.channels * l.latent_plane());
  forward_transform(Planes(frame.data().begin(), frame.data().end()), l, q, latent, 1, 0);
  return Tensor32({l.channels, 1, l.lh(), l.lw()}, std::move(latent));
}

ClipLatent toy_vae_encode(const Tensor32& frames, const ToyVaeConfig& cfg, const MotionParams& motion,
                          ClipSpec source) {
  const Shape& s = frames.shape();
  if (s.rank() != 4 || s[0] != 3) throw Error(ErrorCode::ShapeMismatch, "clip must be [3, T, H, W], got " + s.str());
  validate(cfg);
  const std::size_t total = s[1];
  const std::size_t stride = static_cast<std::size_t>(cfg.temporal_stride);
  if ((total - 1) % stride != 0) {
    throw Error(ErrorCode::BadTemporalLength,
                fmt::format("clip of {} frames is not 1 modulo {}", total, cfg.temporal_stride));
  }
  const Layout l = make_layout(s[2], s[3], cfg);
  const auto q = toy_vae_basis(cfg);
  const std::size_t f = 1 + (total - 1) / stride;
  const auto data = frames.data();
  std::vector<float> latent(l.channels * f * l.latent_plane());
  for (std::size_t k = 0; k < f; ++k) forward_transform(frame_planes(data, l, total, k * stride), l, q, latent, f, k);

  if (source.length == 0) source = {0, static_cast<int>(total)};
  return {Tensor32({l.channels, f, l.lh(), l.lw()}, std::move(latent)), source, motion};
}

Tensor32 toy_vae_decode(const ClipLatent& latent, const ToyVaeConfig& cfg) {
  validate(cfg);
  const Shape& s = latent.data.shape();
  if (s.rank() != 4 || s[0] != static_cast<std::size_t>(cfg.latent_channels)) {
    throw Error(ErrorCode::ShapeMismatch, "clip latent " + s.str() + " does not match the codec config");
  }
  const std::size_t stride = static_cast<std::size_t>(cfg.temporal_stride);
  const std::size_t f = s[1];
  const std::size_t total = static_cast<std::size_t>(latent.source.length);
  if (total == 0 || (total - 1) % stride != 0 || 1 + (total - 1) / stride != f) {
    throw Error(ErrorCode::BadTemporalLength,
                fmt::format("latent of {} frames cannot decode to {} frames", f, latent.source.length));
  }
  const std::size_t ss = static_cast<std::size_t>(cfg.spatial_stride);
  const Layout l = make_layout(s[2] * ss, s[3] * ss, cfg);
  const auto q = toy_vae_basis(cfg);
  const auto z = latent.data.data();

  std::vector<float> out(3 * total * l.plane());
  Planes prev = inverse_transform(z, l, q, f, 0);
  store_planes(prev, l, out, total, 0);
  for (std::size_t k = 1; k < f; ++k) {
    Planes next = inverse_transform(z, l, q, f, k);
    for (std::size_t d = 1; d < stride; ++d) {
      store_planes(interpolate(prev, next, l, latent.motion, static_cast<int>(d), cfg.temporal_stride), l, out,
                   total, (k - 1) * stride + d);
    }
    store_planes(next, l, out, total, k * stride);
    prev = std::move(next);
  }
  return Tensor32({3, total, l.height, l.width}, std::move(out));
}

}  // namespace stcdit
