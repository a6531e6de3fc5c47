#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/parallel.hpp"
#include "stcdit/pipeline.hpp"

namespace stcdit {

Tensor32 frames_to_tensor(const FrameSequence& seq, int start, int length) {
  if (start < 0 || length < 1 || static_cast<std::size_t>(start) >= seq.size()) {
    throw Error(ErrorCode::InvalidBreaks, fmt::format("clip [{}, {}) outside a {}-frame sequence", start,
                                                      start + length, seq.size()));
  }
  const std::size_t w = static_cast<std::size_t>(seq.width());
  const std::size_t h = static_cast<std::size_t>(seq.height());
  const std::size_t plane = w * h;
  const std::size_t len = static_cast<std::size_t>(length);
  const int ch = channels(seq.format());
  std::vector<float> out(3 * len * plane);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t src = std::min(static_cast<std::size_t>(start) + t, seq.size() - 1);
    const auto px = seq[src].data();
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t from = ch == 1 ? 0 : c;
      float* dst = out.data() + (c * len + t) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(px[i * ch + from]) / 255.0f;
    }
  }
  return Tensor32({3, len, h, w}, std::move(out));
}

std::vector<Frame> tensor_to_frames(const Tensor32& frames, PixelFormat format) {
  const Shape& s = frames.shape();
  if (s.rank() != 4 || s[0] != 3) throw Error(ErrorCode::ShapeMismatch, "frames must be [3, T, H, W], got " + s.str());
  const std::size_t len = s[1];
  const std::size_t plane = s[2] * s[3];
  const int ch = channels(format);
  const auto v = frames.data();
  auto quantize = [](double x) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
  };
  std::vector<Frame> out;
  out.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<std::uint8_t> px(plane * static_cast<std::size_t>(ch));
    for (std::size_t i = 0; i < plane; ++i) {
      const double r = v[(0 * len + t) * plane + i];
      const double g = v[(1 * len + t) * plane + i];
      const double b = v[(2 * len + t) * plane + i];
      if (ch == 1) {
        px[i] = quantize((r + g + b) / 3.0);
      } else {
        px[3 * i] = quantize(r);
        px[3 * i + 1] = quantize(g);
        px[3 * i + 2] = quantize(b);
      }
    }
    out.emplace_back(static_cast<int>(s[3]), static_cast<int>(s[2]), format, std::move(px));
  }
  return out;
}

namespace {

MotionParams clip_motion(const MotionSeries* series, const ClipSpec& clip) {
  if (series == nullptr || series->params.empty()) return MotionParams::identity();
  const std::size_t n = series->params.size();
  const std::size_t lo = std::min(static_cast<std::size_t>(clip.start), n);
  const std::size_t hi = std::min(static_cast<std::size_t>(std::max(clip.end() - 1, clip.start)), n);
  return median_motion(std::span<const MotionParams>(series->params).subspan(lo, hi - lo));
}

}  // namespace

std::vector<ClipLatent> encode_segments(const FrameSequence& seq, std::span<const ClipSpec> clips,
                                        const ToyVaeConfig& cfg, const MotionSeries* series, int threads) {
  if (clips.empty()) throw Error(ErrorCode::EmptyClipList, "no clips to encode");
  std::vector<ClipLatent> out(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) {
    const ClipSpec& c = clips[i];
    out[i] = toy_vae_encode(frames_to_tensor(seq, c.start, c.length), cfg, clip_motion(series, c), c);
  });
  return out;
}

std::vector<std::size_t> ConcatLatents::lengths() const {
  std::vector<std::size_t> out;
  for (const auto& e : seg_map) out.push_back(e.latent_length);
  return out;
}

ConcatLatents concat_latents(std::span<const ClipLatent> clips) {
  if (clips.empty()) throw Error(ErrorCode::EmptyClipList, "no clip latents to concatenate");
  ConcatLatents out;
  std::vector<Tensor32> parts;
  for (const ClipLatent& c : clips) {
    parts.push_back(c.data);
    out.seg_map.push_back({c.frames(), c.source, c.motion});
  }
  out.y = parts.size() == 1 ? parts.front() : concat<float>(parts, 1);
  return out;
}

std::vector<ClipLatent> split_latents(const Tensor32& y, std::span<const SegMapEntry> seg_map) {
  if (y.shape().rank() != 4) throw Error(ErrorCode::ShapeMismatch, "latent must be [C, F, H, W], got " + y.shape().str());
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& e : seg_map) {
    if (e.latent_length == 0) throw Error(ErrorCode::SegMapMismatch, "segment map holds an empty clip");
    total += e.latent_length;
    sizes.push_back(e.latent_length);
  }
  if (seg_map.empty() || total != y.shape()[1]) {
    throw Error(ErrorCode::SegMapMismatch,
                fmt::format("segment map covers {} latent frames, latent has {}", total, y.shape()[1]));
  }
  std::vector<ClipLatent> out;
  if (sizes.size() == 1) {
    out.push_back({y, seg_map[0].source, seg_map[0].motion});
    return out;
  }
  auto parts = split(y, 1, sizes);
  for (std::size_t i = 0; i < parts.size(); ++i) out.push_back({parts[i], seg_map[i].source, seg_map[i].motion});
  return out;
}

FrameSequence decode_segments(std::span<const ClipLatent> clips, const ToyVaeConfig& cfg, PixelFormat format,
                              double fps, int threads) {
  if (clips.empty()) throw Error(ErrorCode::EmptyClipList, "no clip latents to decode");
  std::vector<std::vector<Frame>> decoded(clips.size());
  parallel_for(clips.size(), threads,
               [&](std::size_t i) { decoded[i] = tensor_to_frames(toy_vae_decode(clips[i], cfg), format); });
  std::vector<Frame> frames;
  for (auto& d : decoded) std::move(d.begin(), d.end(), std::back_inserter(frames));
  return FrameSequence(std::move(frames), fps);
}

double psnr_db(const FrameSequence& reference, const FrameSequence& test, int crop) {
  if (reference.width() != test.width() || reference.height() != test.height() ||
      reference.format() != test.format()) {
    throw Error(ErrorCode::DimensionMismatch, "PSNR inputs differ in size or format");
  }
  const int w = reference.width();
  const int h = reference.height();
  if (2 * crop >= w || 2 * crop >= h) throw Error(ErrorCode::DimensionMismatch, "crop removes the whole frame");
  const int ch = channels(reference.format());
  const std::size_t n = std::min(reference.size(), test.size());
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (int y = crop; y < h - crop; ++y) {
      for (int x = crop; x < w - crop; ++x) {
        for (int c = 0; c < ch; ++c) {
          const double d = static_cast<double>(reference[t].at(x, y, c)) - static_cast<double>(test[t].at(x, y, c));
          sse += d * d;
          ++count;
        }
      }
    }
  }
  const double mse = sse / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCeiling;
  return std::min(kPsnrCeiling, 10.0 * std::log10(255.0 * 255.0 / mse));
}

}  // namespace stcdit
