#include <charconv>
#include <fstream>
#include <functional>

#include <fmt/format.h>

#include "stcdit/cli.hpp"
#include "stcdit/error.hpp"

namespace stcdit::cli {

namespace {

using Setter = std::function<void(Config&, const std::string&)>;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("{}: cannot parse '{}'", key, text));
  }
  return value;
}

// Insertion-ordered so config_keys() documents in a stable order.
const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = [] {
    std::vector<std::pair<std::string, Setter>> t;
    auto add_int = [&t](std::string key, auto field) {
      t.emplace_back(key, [key, field](Config& c, const std::string& v) { field(c) = parse_number<int>(key, v); });
    };
    auto add_real = [&t](std::string key, auto field) {
      t.emplace_back(key, [key, field](Config& c, const std::string& v) { field(c) = parse_number<double>(key, v); });
    };
    auto add_size = [&t](std::string key, auto field) {
      t.emplace_back(key, [key, field](Config& c, const std::string& v) {
        field(c) = parse_number<std::size_t>(key, v);
      });
    };
    auto add_u64 = [&t](std::string key, auto field) {
      t.emplace_back(key, [key, field](Config& c, const std::string& v) {
        field(c) = parse_number<std::uint64_t>(key, v);
      });
    };
    add_real("thresholds.tau_t", [](Config& c) -> double& { return c.motion.thresholds.tau_t; });
    add_real("thresholds.tau_theta", [](Config& c) -> double& { return c.motion.thresholds.tau_theta; });
    add_real("thresholds.tau_s", [](Config& c) -> double& { return c.motion.thresholds.tau_s; });
    add_int("thresholds.min_track_count", [](Config& c) -> int& { return c.motion.thresholds.min_track_count; });
    add_int("corners.max_corners", [](Config& c) -> int& { return c.motion.corners.max_corners; });
    add_real("corners.quality_level", [](Config& c) -> double& { return c.motion.corners.quality_level; });
    add_real("corners.min_distance", [](Config& c) -> double& { return c.motion.corners.min_distance; });
    add_int("corners.block_size", [](Config& c) -> int& { return c.motion.corners.block_size; });
    add_int("corners.min_count", [](Config& c) -> int& { return c.motion.corners.min_count; });
    add_int("lk.window", [](Config& c) -> int& { return c.motion.lk.window; });
    add_int("lk.pyramid_levels", [](Config& c) -> int& { return c.motion.lk.pyramid_levels; });
    add_int("lk.max_iters", [](Config& c) -> int& { return c.motion.lk.max_iters; });
    add_real("lk.eps", [](Config& c) -> double& { return c.motion.lk.eps; });
    add_real("lk.convergence", [](Config& c) -> double& { return c.motion.lk.convergence; });
    add_int("ransac.iters", [](Config& c) -> int& { return c.motion.ransac.iters; });
    add_real("ransac.inlier_px", [](Config& c) -> double& { return c.motion.ransac.inlier_px; });
    add_u64("ransac.seed", [](Config& c) -> std::uint64_t& { return c.motion.ransac.seed; });
    add_int("segments.temporal_stride", [](Config& c) -> int& { return c.segments.temporal_stride; });
    add_int("segments.min_clip_len", [](Config& c) -> int& { return c.segments.min_clip_len; });
    add_int("vae.temporal_stride", [](Config& c) -> int& { return c.vae.temporal_stride; });
    add_int("vae.spatial_stride", [](Config& c) -> int& { return c.vae.spatial_stride; });
    add_int("vae.latent_channels", [](Config& c) -> int& { return c.vae.latent_channels; });
    add_u64("vae.seed", [](Config& c) -> std::uint64_t& { return c.vae.seed; });
    add_size("model.blocks", [](Config& c) -> std::size_t& { return c.model.blocks; });
    add_size("model.heads", [](Config& c) -> std::size_t& { return c.model.heads; });
    add_size("model.dim", [](Config& c) -> std::size_t& { return c.model.dim; });
    add_size("model.ffn_dim", [](Config& c) -> std::size_t& { return c.model.ffn_dim; });
    add_size("model.max_tokens", [](Config& c) -> std::size_t& { return c.model.max_tokens; });
    t.emplace_back("model.acfm_placement", [](Config& c, const std::string& v) {
      if (v == "after-self-attention") {
        c.model.acfm_placement = AcfmPlacement::AfterSelfAttention;
      } else if (v == "after-cross-attention") {
        c.model.acfm_placement = AcfmPlacement::AfterCrossAttention;
      } else {
        throw Error(ErrorCode::InvalidConfig, "model.acfm_placement: expected after-self-attention or after-cross-attention");
      }
    });
    add_u64("seed", [](Config& c) -> std::uint64_t& { return c.seed; });
    add_int("threads", [](Config& c) -> int& { return c.motion.threads; });
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(Config& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, set] : setters()) {
    if (name == key) {
      set(cfg, value);
      // The model reads whatever the codec writes.
      if (key == "vae.latent_channels") cfg.model.latent_channels = static_cast<std::size_t>(cfg.vae.latent_channels);
      return;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
}

Config load_config(const std::filesystem::path& file, Config base) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot read config " + file.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, fmt::format("{}:{}: expected key = value", file.string(), line_no));
    }
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, set] : setters()) keys.push_back(name);
  return keys;
}

}  // namespace stcdit::cli
