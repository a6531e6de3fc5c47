#include <cmath>

#include "stcdit/error.hpp"
#include "stcdit/image.hpp"
#include "stcdit/motion.hpp"

namespace stcdit {

namespace {

struct Level {
  ImageF image;
  ImageF grad_x;
  ImageF grad_y;
};

std::vector<Level> build_pyramid(const Frame& f, int levels, int window, bool with_gradients) {
  std::vector<Level> pyr;
  ImageF img = luma_image(f);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      if (img.width / 2 < window || img.height / 2 < window) break;
      img = downsample2(img);
    }
    Level lv;
    lv.image = img;
    if (with_gradients) {
      lv.grad_x = ImageF(img.width, img.height);
      lv.grad_y = ImageF(img.width, img.height);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          lv.grad_x.at(x, y) = 0.5f * (img.clamped(x + 1, y) - img.clamped(x - 1, y));
          lv.grad_y.at(x, y) = 0.5f * (img.clamped(x, y + 1) - img.clamped(x, y - 1));
        }
      }
    }
    pyr.push_back(std::move(lv));
  }
  return pyr;
}

}  // namespace

std::vector<TrackedPair> track_corners(const Frame& prev, const Frame& next,
                                       std::span<const Corner> corners, const LkParams& params) {
  if (prev.width() != next.width() || prev.height() != next.height()) {
    throw Error(ErrorCode::DimensionMismatch, "track_corners frames differ in size");
  }
  const int levels = std::max(1, params.pyramid_levels);
  const auto pyr_prev = build_pyramid(prev, levels, params.window, true);
  const auto pyr_next = build_pyramid(next, static_cast<int>(pyr_prev.size()), params.window, false);
  const int top = static_cast<int>(pyr_prev.size()) - 1;
  const int half = params.window / 2;
  const std::size_t win_px = static_cast<std::size_t>(2 * half + 1) * (2 * half + 1);

  std::vector<float> tmpl(win_px), ix(win_px), iy(win_px);
  std::vector<TrackedPair> out;
  out.reserve(corners.size());
  for (const Corner& c : corners) {
    TrackedPair pair;
    pair.src = {c.x, c.y};
    double gx = 0.0, gy = 0.0;  // displacement guess at the current level
    bool lost = false;
    for (int l = top; l >= 0 && !lost; --l) {
      const Level& P = pyr_prev[l];
      const ImageF& J = pyr_next[l].image;
      const double scale = 1.0 / static_cast<double>(1 << l);
      const double px = c.x * scale;
      const double py = c.y * scale;
      double a = 0, b = 0, d = 0;
      std::size_t k = 0;
      for (int wy = -half; wy <= half; ++wy) {
        for (int wx = -half; wx <= half; ++wx, ++k) {
          tmpl[k] = P.image.sample(px + wx, py + wy);
          ix[k] = P.grad_x.sample(px + wx, py + wy);
          iy[k] = P.grad_y.sample(px + wx, py + wy);
          a += double(ix[k]) * ix[k];
          b += double(ix[k]) * iy[k];
          d += double(iy[k]) * iy[k];
        }
      }
      const double inv_n = 1.0 / static_cast<double>(win_px);
      const double half_diff = 0.5 * (a - d) * inv_n;
      const double min_eig = 0.5 * (a + d) * inv_n - std::sqrt(half_diff * half_diff + b * b * inv_n * inv_n);
      const double det = a * d - b * b;
      if (min_eig < params.eps || det <= 0.0) {
        lost = true;
        break;
      }
      double vx = 0.0, vy = 0.0;
      for (int it = 0; it < params.max_iters; ++it) {
        const double qx = px + gx + vx;
        const double qy = py + gy + vy;
        double bx = 0, by = 0;
        k = 0;
        for (int wy = -half; wy <= half; ++wy) {
          for (int wx = -half; wx <= half; ++wx, ++k) {
            const double diff = tmpl[k] - J.sample(qx + wx, qy + wy);
            bx += diff * ix[k];
            by += diff * iy[k];
          }
        }
        const double dx = (d * bx - b * by) / det;
        const double dy = (a * by - b * bx) / det;
        vx += dx;
        vy += dy;
        if (!std::isfinite(vx) || !std::isfinite(vy)) {
          lost = true;
          break;
        }
        if (dx * dx + dy * dy < params.convergence * params.convergence) break;
      }
      if (l > 0) {
        gx = 2.0 * (gx + vx);
        gy = 2.0 * (gy + vy);
      } else {
        gx += vx;
        gy += vy;
      }
    }
    pair.dst = {c.x + gx, c.y + gy};
    if (!lost && (pair.dst.x < 0 || pair.dst.y < 0 || pair.dst.x > next.width() - 1 ||
                  pair.dst.y > next.height() - 1)) {
      lost = true;
    }
    if (!lost) {
      const Level& P = pyr_prev[0];
      const ImageF& J = pyr_next[0].image;
      double err = 0.0;
      for (int wy = -half; wy <= half; ++wy) {
        for (int wx = -half; wx <= half; ++wx) {
          err += std::abs(P.image.sample(c.x + wx, c.y + wy) - J.sample(pair.dst.x + wx, pair.dst.y + wy));
        }
      }
      pair.residual = err / static_cast<double>(win_px);
      if (!std::isfinite(pair.residual)) lost = true;
    }
    pair.status = lost ? TrackStatus::Lost : TrackStatus::Ok;
    out.push_back(pair);
  }
  return out;
}

}  // namespace stcdit
