#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stcdit/model.hpp"
#include "stcdit/motion.hpp"
#include "stcdit/pipeline.hpp"

namespace stcdit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

/// Every tunable of the command surface. Defaults are the library defaults
/// plus seed 42.
struct Config {
  MotionConfig motion;
  SegmentConstraints segments;
  ToyVaeConfig vae;
  ModelConfig model;
  std::uint64_t seed = 42;

  PipelineConfig pipeline() const { return {motion, segments, vae}; }
};

/// Sets one `key = value` entry. Throws InvalidConfig for unknown keys or
/// unparsable values.
void apply_config_entry(Config& cfg, const std::string& key, const std::string& value);

/// Flat `key = value` lines; `#` starts a comment. Throws MissingInput if the
/// file cannot be read, InvalidConfig on a malformed line.
Config load_config(const std::filesystem::path& file, Config base = {});

/// Names of every accepted config key, in documentation order.
std::vector<std::string> config_keys();

// ---- JSON (fixed key order, six decimals) ------------------------------------

std::string segmentation_json(int n_frames, std::span<const int> breaks, std::span<const ClipSpec> clips,
                              std::span<const MotionParams> params);
std::string reconstruct_json(ReconstructionMode mode, std::size_t clips, double psnr,
                             std::span<const std::size_t> seg_map);

/// Ground truth written next to synthesized frames.
std::string truth_json(int n_frames, std::span<const int> breaks, std::span<const MotionParams> params);
/// The `forward` report, also echoed to stdout.
std::string forward_json(std::size_t frames, std::size_t clips, std::uint64_t seed, double psnr,
                         std::span<const std::size_t> seg_map);

/// Entry point behind the `stcdit` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stcdit::cli
