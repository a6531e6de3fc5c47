#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/motion.hpp"

namespace stcdit {

std::vector<double> min_eigen_response(const Frame& frame, int block_size) {
  const Frame gray = to_grayscale(frame);
  const int w = gray.width();
  const int h = gray.height();
  auto px = [&](int x, int y) -> double {
    return gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> gxx(n), gxy(n), gyy(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gxx[i] = gx * gx;
      gxy[i] = gx * gy;
      gyy[i] = gy * gy;
    }
  }
  const int r = block_size / 2;
  const int lo = -r;
  const int hi = block_size - 1 - r;
  const double norm = 1.0 / (static_cast<double>(block_size) * block_size);
  std::vector<double> out(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = lo; dy <= hi; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = lo; dx <= hi; ++dx) {
          const std::size_t j = static_cast<std::size_t>(yy) * w + std::clamp(x + dx, 0, w - 1);
          a += gxx[j];
          b += gxy[j];
          c += gyy[j];
        }
      }
      a *= norm;
      b *= norm;
      c *= norm;
      const double half_diff = 0.5 * (a - c);
      out[static_cast<std::size_t>(y) * w + x] =
          std::max(0.0, 0.5 * (a + c) - std::sqrt(half_diff * half_diff + b * b));
    }
  }
  return out;
}

namespace {

// Vertex offset of the parabola through (-1, l), (0, m), (1, r).
double parabolic_offset(double l, double m, double r) {
  const double denom = l - 2 * m + r;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
}

}  // namespace

std::vector<Corner> detect_corners(const Frame& frame, const CornerParams& params) {
  if (params.block_size < 1 || frame.width() < params.block_size || frame.height() < params.block_size) {
    throw Error(ErrorCode::DimensionMismatch, "frame smaller than the corner block size");
  }
  const int w = frame.width();
  const int h = frame.height();
  const auto response = min_eigen_response(frame, params.block_size);
  auto score = [&](int x, int y) {
    return response[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };

  const double max_score = *std::max_element(response.begin(), response.end());
  std::vector<Corner> candidates;
  if (max_score > 0.0) {
    const double floor = params.quality_level * max_score;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = score(x, y);
        if (s <= 0.0 || s < floor) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dx || dy) && score(x + dx, y + dy) > s) {
              peak = false;
              break;
            }
          }
        }
        if (!peak) continue;
        const double ox = parabolic_offset(score(x - 1, y), s, score(x + 1, y));
        const double oy = parabolic_offset(score(x, y - 1), s, score(x, y + 1));
        candidates.push_back({std::clamp(x + ox, 0.0, w - 1.0), std::clamp(y + oy, 0.0, h - 1.0), s});
      }
    }
  }
  // Raster order is the tie-break for equal scores.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Corner& a, const Corner& b) { return a.score > b.score; });

  std::vector<Corner> picked;
  const double min_d2 = params.min_distance * params.min_distance;
  for (const Corner& c : candidates) {
    if (static_cast<int>(picked.size()) >= params.max_corners) break;
    const bool clear = std::none_of(picked.begin(), picked.end(), [&](const Corner& p) {
      const double dx = p.x - c.x;
      const double dy = p.y - c.y;
      return dx * dx + dy * dy < min_d2;
    });
    if (clear) picked.push_back(c);
  }
  if (static_cast<int>(picked.size()) < params.min_count) {
    throw Error(ErrorCode::TooFewCorners,
                fmt::format("{} corners survived, {} required", picked.size(), params.min_count));
  }
  return picked;
}

}  // namespace stcdit
