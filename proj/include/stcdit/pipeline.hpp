#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stcdit/latent.hpp"
#include "stcdit/model.hpp"
#include "stcdit/motion.hpp"
#include "stcdit/video_io.hpp"

namespace stcdit {

/// Stand-in codec. Latent frame k is an orthogonal space-to-depth transform
/// of clip frame k * temporal_stride, so every latent frame (the first
/// included) is lossless. Frames between two latent frames are decoded by
/// motion-compensated interpolation: both neighbours are warped with the clip
/// motion and blended by temporal distance. Static clips decode exactly.
struct ToyVaeConfig {
  int temporal_stride = 4;
  int spatial_stride = 2;
  /// Must be at least 3 * spatial_stride^2 for the transform to be lossless.
  int latent_channels = 12;
  std::uint64_t seed = 7;
};

/// [C, 3 s^2] with orthonormal columns, from seeded Gram-Schmidt.
/// Throws InvalidConfig for bad strides or too few channels.
std::vector<double> toy_vae_basis(const ToyVaeConfig& cfg);

/// frame [3, H, W] or [3, 1, H, W] -> [C, 1, H/s, W/s].
Tensor32 toy_vae_transform(const Tensor32& frame, const ToyVaeConfig& cfg);

/// frames [3, T, H, W] in [0, 1]. `motion` is stored for the decoder.
/// Throws BadTemporalLength unless
/// T = 1 (mod temporal_stride), ShapeMismatch if H or W is not divisible by
/// the spatial stride.
ClipLatent toy_vae_encode(const Tensor32& frames, const ToyVaeConfig& cfg,
                          const MotionParams& motion = MotionParams::identity(), ClipSpec source = {});

/// Returns [3, source.length, H, W].
Tensor32 toy_vae_decode(const ClipLatent& latent, const ToyVaeConfig& cfg);

/// [3, length, H, W] in [0, 1]; frames past the end replicate the last frame.
/// Gray input is copied into all three channels.
Tensor32 frames_to_tensor(const FrameSequence& seq, int start, int length);

/// Rounds to 8 bits. Gray output averages the three channels.
std::vector<Frame> tensor_to_frames(const Tensor32& frames, PixelFormat format);

/// One latent per clip, in clip order. With a motion series the clip's median
/// motion drives prediction; otherwise the identity is used.
std::vector<ClipLatent> encode_segments(const FrameSequence& seq, std::span<const ClipSpec> clips,
                                        const ToyVaeConfig& cfg, const MotionSeries* series = nullptr,
                                        int threads = 0);

struct SegMapEntry {
  std::size_t latent_length = 0;
  ClipSpec source;
  MotionParams motion;
};

struct ConcatLatents {
  Tensor32 y;
  std::vector<SegMapEntry> seg_map;

  std::vector<std::size_t> lengths() const;
};

ConcatLatents concat_latents(std::span<const ClipLatent> clips);

/// Throws SegMapMismatch if the map does not partition y's temporal axis.
std::vector<ClipLatent> split_latents(const Tensor32& y, std::span<const SegMapEntry> seg_map);

/// Decoded clips back to back; Σ clip lengths frames.
FrameSequence decode_segments(std::span<const ClipLatent> clips, const ToyVaeConfig& cfg, PixelFormat format,
                              double fps = 30.0, int threads = 0);

/// 8-bit PSNR over the first min(|a|, |b|) frames with `crop` pixels removed
/// from every border. Peak 255; identical inputs give 100 dB.
double psnr_db(const FrameSequence& reference, const FrameSequence& test, int crop = 4);

inline constexpr double kPsnrCeiling = 100.0;

enum class ReconstructionMode { Standard, MotionAware };

const char* mode_name(ReconstructionMode mode);

struct PipelineConfig {
  MotionConfig motion;
  SegmentConstraints segments;
  ToyVaeConfig vae;
};

/// Clip layout for a sequence: one clip over the padded sequence in
/// Standard mode, motion segmentation in MotionAware mode.
struct Segmentation {
  MotionSeries series;
  std::vector<int> breaks;
  std::vector<ClipSpec> clips;
};

Segmentation plan_segments(const FrameSequence& seq, ReconstructionMode mode, const PipelineConfig& cfg);

struct ReconstructionResult {
  FrameSequence frames;
  double psnr = 0.0;
  std::vector<ClipSpec> clips;
  std::vector<std::size_t> seg_map;
};

/// Encode/decode round trip; PSNR is measured against the input frames only.
ReconstructionResult reconstruct(const FrameSequence& seq, ReconstructionMode mode, const PipelineConfig& cfg);

struct ForwardOptions {
  std::uint64_t seed = 42;
  bool use_anchors = true;
  /// Uses these weights instead of RestorationWeights::init(model, seed).
  const RestorationWeights<float>* weights = nullptr;
};

struct ForwardResult {
  FrameSequence frames;
  Tensor32 restored_latent;
  std::vector<ClipSpec> clips;
  std::vector<std::size_t> seg_map;
};

/// Segment, encode, concat, one pass of the restoration model, split, decode.
/// The noise latent is seeded with seed + 1.
ForwardResult run_restoration_forward(const FrameSequence& seq, const PipelineConfig& cfg, const ModelConfig& model,
                                      const ForwardOptions& options = {});

}  // namespace stcdit
