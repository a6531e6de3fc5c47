#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stcdit/video_io.hpp"

namespace stcdit {

/// Single-channel float plane used by the motion and codec paths.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  ImageF() = default;
  ImageF(int w, int h, float value = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, value) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  float clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }

  /// Bilinear sample with replicated border.
  float sample(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const float ax = static_cast<float>(x - fx);
    const float ay = static_cast<float>(y - fy);
    const float top = clamped(x0, y0) * (1.0f - ax) + clamped(x0 + 1, y0) * ax;
    const float bottom = clamped(x0, y0 + 1) * (1.0f - ax) + clamped(x0 + 1, y0 + 1) * ax;
    return top * (1.0f - ay) + bottom * ay;
  }
};

/// Intensity plane of channel `channel` (Gray8 frames have only channel 0).
ImageF to_image(const Frame& f, int channel = 0);

/// Luma plane regardless of input format.
ImageF luma_image(const Frame& f);

/// 2x box-filter downsampling; odd trailing rows/columns are dropped.
ImageF downsample2(const ImageF& img);

}  // namespace stcdit
