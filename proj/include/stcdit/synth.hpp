#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stcdit/geometry.hpp"
#include "stcdit/video_io.hpp"

namespace stcdit {

enum class Texture { Blocks, Checkerboard };

/// A run of frames sharing one per-frame camera motion. Motion is expressed
/// about the frame center ((w-1)/2, (h-1)/2).
struct Regime {
  int length = 1;
  MotionParams motion;
};

struct SynthSpec {
  std::vector<Regime> regimes;
  std::uint64_t texture_seed = 1;
  Texture base = Texture::Blocks;
  int width = 128;
  int height = 128;
  int cell = 8;
  double fps = 30.0;
};

struct SynthVideo {
  FrameSequence sequence;
  /// truth[i] is the motion taking frame i to frame i+1.
  std::vector<MotionParams> truth;
  /// Start frame of every regime after the first.
  std::vector<int> breaks;
};

/// Renders a synthetic video. Frame k samples the unbounded base texture through the
/// accumulated inverse motion with bilinear interpolation, so frame k+1 is
/// frame k warped by the regime motion.
/// Throws DegenerateMotion for a non-positive scale, InvalidConfig for an
/// empty regime list or a regime shorter than one frame.
SynthVideo synth_video(const SynthSpec& spec);

/// The fixed 12-video regime-change suite (60-120 frames, 1-3 changes).
std::vector<SynthSpec> standard_suite();

/// A motionless video of `frames` frames.
SynthSpec static_spec(int frames, std::uint64_t seed = 3);

std::string texture_name(Texture t);
Texture parse_texture(const std::string& name);

}  // namespace stcdit
