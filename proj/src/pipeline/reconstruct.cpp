#include <cmath>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/pipeline.hpp"

namespace stcdit {

const char* mode_name(ReconstructionMode mode) {
  return mode == ReconstructionMode::Standard ? "standard" : "motion-aware";
}

Segmentation plan_segments(const FrameSequence& seq, ReconstructionMode mode, const PipelineConfig& cfg) {
  Segmentation out;
  const int n = static_cast<int>(seq.size());
  if (n >= 2) out.series = motion_timeseries(seq, cfg.motion);
  if (mode == ReconstructionMode::MotionAware && n >= 2) {
    const double diag = std::hypot(static_cast<double>(seq.width()), static_cast<double>(seq.height()));
    out.breaks = detect_motion_breaks(out.series.params, cfg.motion.thresholds, diag);
  }
  out.clips = segment_video(n, out.breaks, cfg.segments);
  return out;
}

namespace {

FrameSequence trimmed(const FrameSequence& decoded, std::size_t n) {
  std::vector<Frame> frames(decoded.frames().begin(), decoded.frames().begin() + static_cast<std::ptrdiff_t>(n));
  return FrameSequence(std::move(frames), decoded.fps());
}

void require_stride_match(const PipelineConfig& cfg) {
  if (cfg.segments.temporal_stride != cfg.vae.temporal_stride) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("segment stride {} differs from codec stride {}",
                                                      cfg.segments.temporal_stride, cfg.vae.temporal_stride));
  }
}

}  // namespace

ReconstructionResult reconstruct(const FrameSequence& seq, ReconstructionMode mode, const PipelineConfig& cfg) {
  require_stride_match(cfg);
  const Segmentation plan = plan_segments(seq, mode, cfg);
  const auto latents = encode_segments(seq, plan.clips, cfg.vae, &plan.series, cfg.motion.threads);
  const FrameSequence decoded = decode_segments(latents, cfg.vae, seq.format(), seq.fps(), cfg.motion.threads);
  ReconstructionResult out{trimmed(decoded, seq.size()), 0.0, plan.clips, {}};
  out.psnr = psnr_db(seq, out.frames);
  for (const ClipLatent& l : latents) out.seg_map.push_back(l.frames());
  return out;
}

ForwardResult run_restoration_forward(const FrameSequence& seq, const PipelineConfig& cfg, const ModelConfig& model,
                                      const ForwardOptions& options) {
  require_stride_match(cfg);
  if (model.latent_channels != static_cast<std::size_t>(cfg.vae.latent_channels)) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("model expects {} latent channels, codec produces {}",
                                                      model.latent_channels, cfg.vae.latent_channels));
  }
  const Segmentation plan = plan_segments(seq, ReconstructionMode::MotionAware, cfg);
  const auto latents = encode_segments(seq, plan.clips, cfg.vae, &plan.series, cfg.motion.threads);
  const ConcatLatents joined = concat_latents(latents);
  const std::vector<std::size_t> lengths = joined.lengths();

  const RestorationWeights<float> owned =
      options.weights ? RestorationWeights<float>{} : RestorationWeights<float>::init(model, options.seed);
  const RestorationWeights<float>& weights = options.weights ? *options.weights : owned;
  const Tensor32 restored =
      restoration_forward(joined.y, lengths, weights, model, options.seed + 1, options.use_anchors);

  const auto clips = split_latents(restored, joined.seg_map);
  const FrameSequence decoded = decode_segments(clips, cfg.vae, seq.format(), seq.fps(), cfg.motion.threads);
  return {trimmed(decoded, seq.size()), restored, plan.clips, lengths};
}

}  // namespace stcdit
