#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "stcdit/cli.hpp"
#include "stcdit/error.hpp"
#include "stcdit/synth.hpp"
#include "stcdit/verify.hpp"

namespace stcdit::cli {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingInput, "cannot write " + file.string());
  out << text;
}

void emit(const std::string& output, const std::string& text, std::ostream& out) {
  if (output.empty()) {
    out << text;
  } else {
    write_text(output, text);
  }
}

Config resolve_config(const std::string& config_path) {
  return config_path.empty() ? Config{} : load_config(config_path);
}

SynthSpec parse_synth_spec(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot read synth spec " + file.string());
  SynthSpec spec;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "width") {
        spec.width = value.get<int>();
      } else if (key == "height") {
        spec.height = value.get<int>();
      } else if (key == "cell") {
        spec.cell = value.get<int>();
      } else if (key == "texture") {
        spec.base = parse_texture(value.get<std::string>());
      } else if (key == "texture_seed") {
        spec.texture_seed = value.get<std::uint64_t>();
      } else if (key == "fps") {
        spec.fps = value.get<double>();
      } else if (key == "regimes") {
        for (const auto& r : value) {
          Regime regime;
          for (const auto& [rk, rv] : r.items()) {
            if (rk == "length") {
              regime.length = rv.get<int>();
            } else if (rk == "tx") {
              regime.motion.tx = rv.get<double>();
            } else if (rk == "ty") {
              regime.motion.ty = rv.get<double>();
            } else if (rk == "theta") {
              regime.motion.theta = rv.get<double>();
            } else if (rk == "scale") {
              regime.motion.scale = rv.get<double>();
            } else {
              throw Error(ErrorCode::InvalidConfig, "unknown regime key '" + rk + "'");
            }
          }
          spec.regimes.push_back(regime);
        }
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown synth spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth spec: ") + e.what());
  }
  return spec;
}

int cmd_analyze(const std::string& input, const std::string& output, const Config& cfg, std::ostream& out) {
  const FrameSequence seq = load_frame_sequence(input);
  const Segmentation plan = plan_segments(seq, ReconstructionMode::MotionAware, cfg.pipeline());
  emit(output, segmentation_json(static_cast<int>(seq.size()), plan.breaks, plan.clips, plan.series.params), out);
  return kExitOk;
}

int cmd_reconstruct(const std::string& input, ReconstructionMode mode, const std::string& output, const Config& cfg,
                    std::ostream& out) {
  const FrameSequence seq = load_frame_sequence(input);
  const ReconstructionResult r = reconstruct(seq, mode, cfg.pipeline());
  emit(output, reconstruct_json(mode, r.clips.size(), r.psnr, r.seg_map), out);
  return kExitOk;
}

int cmd_forward(const std::string& input, const std::string& output, const Config& cfg, std::ostream& out) {
  const FrameSequence seq = load_frame_sequence(input);
  ForwardOptions options;
  options.seed = cfg.seed;
  const ForwardResult r = run_restoration_forward(seq, cfg.pipeline(), cfg.model, options);
  save_image_directory(r.frames, output);
  const std::string report =
      forward_json(r.frames.size(), r.clips.size(), cfg.seed, psnr_db(seq, r.frames), r.seg_map);
  write_text(fs::path(output) / "report.json", report);
  out << report;
  return kExitOk;
}

int cmd_verify(const std::string& suite, const Config& cfg, std::ostream& out) {
  std::vector<verify::Check> checks;
  if (suite == "gradcheck" || suite == "all") {
    auto g = verify::gradcheck_suite(cfg.seed);
    checks.insert(checks.end(), g.begin(), g.end());
  }
  if (suite == "oracle" || suite == "all") {
    auto o = verify::oracle_suite(cfg.seed);
    checks.insert(checks.end(), o.begin(), o.end());
  }
  int failed = 0;
  for (const verify::Check& c : checks) {
    out << verify::format_check(c) << '\n';
    if (!c.passed) ++failed;
  }
  out << fmt::format("{} checks, {} failed\n", checks.size(), failed);
  return failed == 0 ? kExitOk : kExitVerifyFailed;
}

int cmd_synth(const std::string& input, const std::string& output, std::ostream& out) {
  const SynthVideo v = synth_video(parse_synth_spec(input));
  save_image_directory(v.sequence, output);
  const std::string truth = truth_json(static_cast<int>(v.sequence.size()), v.breaks, v.truth);
  write_text(fs::path(output) / "truth.json", truth);
  out << fmt::format("wrote {} frames to {}\n", v.sequence.size(), output);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion-aware segmentation, toy reconstruction and anchor-guided restoration"};
  app.require_subcommand(1);
  std::string input, output, config_path, mode_text = "motion-aware", suite = "all";
  std::optional<std::uint64_t> seed;

  auto common = [&](CLI::App* sub, bool input_required) {
    auto* opt = sub->add_option("--input", input, "Input frames (image directory or raw stream)");
    if (input_required) opt->required();
    sub->add_option("--config", config_path, "key = value config file");
  };
  CLI::App* analyze = app.add_subcommand("analyze", "Motion series, breaks and clips as JSON");
  common(analyze, true);
  analyze->add_option("--output", output, "JSON file (stdout if omitted)");

  CLI::App* recon = app.add_subcommand("reconstruct", "Toy-codec round trip with PSNR report");
  common(recon, true);
  recon->add_option("--mode", mode_text, "standard or motion-aware")
      ->check(CLI::IsMember({"standard", "motion-aware"}));
  recon->add_option("--output", output, "JSON report (stdout if omitted)");

  CLI::App* forward = app.add_subcommand("forward", "One restoration pass with seeded weights");
  common(forward, true);
  forward->add_option("--output", output, "Output frame directory")->required();
  forward->add_option("--seed", seed, "Weight and noise seed (default 42)");

  CLI::App* ver = app.add_subcommand("verify", "Run the gradient and oracle suites");
  ver->add_option("--suite", suite, "gradcheck, oracle or all")->check(CLI::IsMember({"gradcheck", "oracle", "all"}));
  ver->add_option("--config", config_path, "key = value config file");
  ver->add_option("--seed", seed, "Suite seed");

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic video from a JSON spec");
  synth->add_option("--input", input, "Synth spec JSON")->required();
  synth->add_option("--output", output, "Output frame directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    Config cfg = resolve_config(config_path);
    if (seed) cfg.seed = *seed;
    if (analyze->parsed()) return cmd_analyze(input, output, cfg, out);
    if (recon->parsed()) {
      const auto mode = mode_text == "standard" ? ReconstructionMode::Standard : ReconstructionMode::MotionAware;
      return cmd_reconstruct(input, mode, output, cfg, out);
    }
    if (forward->parsed()) return cmd_forward(input, output, cfg, out);
    if (ver->parsed()) return cmd_verify(suite, cfg, out);
    return cmd_synth(input, output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace stcdit::cli
