#pragma once

#include "stcdit/geometry.hpp"
#include "stcdit/motion.hpp"
#include "stcdit/tensor.hpp"

namespace stcdit {

/// One encoded clip: data is [C, f, h, w] with f = 1 + (length - 1) / stride.
/// `motion` is the clip's per-frame camera motion used by the codec.
struct ClipLatent {
  Tensor32 data;
  ClipSpec source;
  MotionParams motion;

  std::size_t frames() const { return data.shape()[1]; }
};

}  // namespace stcdit
