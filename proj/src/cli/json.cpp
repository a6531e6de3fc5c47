#include <cmath>

#include <fmt/format.h>

#include "stcdit/cli.hpp"

namespace stcdit::cli {

namespace {

// Six decimals; values that round to zero print without a sign.
std::string fixed(double v) {
  if (std::abs(v) < 5e-7) v = 0.0;
  return fmt::format("{:.6f}", v);
}

}  // namespace

std::string segmentation_json(int n_frames, std::span<const int> breaks, std::span<const ClipSpec> clips,
                              std::span<const MotionParams> params) {
  std::string s = fmt::format("{{\n  \"n_frames\": {},\n  \"breaks\": [", n_frames);
  for (std::size_t i = 0; i < breaks.size(); ++i) s += fmt::format("{}{}", i ? ", " : "", breaks[i]);
  s += "],\n  \"clips\": [";
  for (std::size_t i = 0; i < clips.size(); ++i) {
    s += fmt::format("{}{{\"start\": {}, \"length\": {}}}", i ? ", " : "", clips[i].start, clips[i].length);
  }
  s += "],\n  \"params\": [";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const MotionParams& p = params[i];
    s += fmt::format("{}\n    {{\"tx\": {}, \"ty\": {}, \"theta\": {}, \"scale\": {}}}", i ? "," : "", fixed(p.tx),
                     fixed(p.ty), fixed(p.theta), fixed(p.scale));
  }
  s += params.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return s;
}

std::string truth_json(int n_frames, std::span<const int> breaks, std::span<const MotionParams> params) {
  std::string s = fmt::format("{{\n  \"n_frames\": {},\n  \"breaks\": [", n_frames);
  for (std::size_t i = 0; i < breaks.size(); ++i) s += fmt::format("{}{}", i ? ", " : "", breaks[i]);
  s += "],\n  \"params\": [";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const MotionParams& p = params[i];
    s += fmt::format("{}\n    {{\"tx\": {}, \"ty\": {}, \"theta\": {}, \"scale\": {}}}", i ? "," : "", fixed(p.tx),
                     fixed(p.ty), fixed(p.theta), fixed(p.scale));
  }
  s += params.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return s;
}

std::string forward_json(std::size_t frames, std::size_t clips, std::uint64_t seed, double psnr,
                         std::span<const std::size_t> seg_map) {
  std::string s = fmt::format("{{\"frames\": {}, \"clips\": {}, \"seed\": {}, \"psnr_db\": {}, \"seg_map\": [",
                              frames, clips, seed, fixed(psnr));
  for (std::size_t i = 0; i < seg_map.size(); ++i) s += fmt::format("{}{}", i ? ", " : "", seg_map[i]);
  return s + "]}\n";
}

std::string reconstruct_json(ReconstructionMode mode, std::size_t clips, double psnr,
                             std::span<const std::size_t> seg_map) {
  std::string s = fmt::format("{{\"mode\": \"{}\", \"clips\": {}, \"psnr_db\": {}, \"seg_map\": [", mode_name(mode),
                              clips, fixed(psnr));
  for (std::size_t i = 0; i < seg_map.size(); ++i) s += fmt::format("{}{}", i ? ", " : "", seg_map[i]);
  return s + "]}\n";
}

}  // namespace stcdit::cli
