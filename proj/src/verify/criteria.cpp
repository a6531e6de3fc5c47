#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/pipeline.hpp"
#include "stcdit/synth.hpp"
#include "stcdit/verify.hpp"

namespace stcdit::verify {

std::string format_check(const Check& c) {
  return fmt::format("{} {:<34} value={:.6g} limit={:.6g}{}{}", c.passed ? "PASS" : "FAIL", c.name, c.value, c.limit,
                     c.detail.empty() ? "" : "  ", c.detail);
}

Check criterion_segmentation() {
  PipelineConfig cfg;
  cfg.motion.threads = 1;
  int mismatched = 0;
  int worst_offset = 0;
  std::string detail;
  const auto start = std::chrono::steady_clock::now();
  const auto suite = standard_suite();
  for (std::size_t v = 0; v < suite.size(); ++v) {
    const SynthVideo video = synth_video(suite[v]);
    const Segmentation plan = plan_segments(video.sequence, ReconstructionMode::MotionAware, cfg);
    bool ok = plan.breaks.size() == video.breaks.size();
    for (std::size_t i = 0; ok && i < plan.breaks.size(); ++i) {
      const int off = std::abs(plan.breaks[i] - video.breaks[i]);
      worst_offset = std::max(worst_offset, off);
      ok = off <= 1;
    }
    if (!ok) {
      ++mismatched;
      detail += fmt::format(" video{}:[{}]vs[{}]", v, fmt::join(plan.breaks, ","), fmt::join(video.breaks, ","));
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Check c{"1 motion segmentation oracle", mismatched == 0 && seconds < 30.0, seconds, 30.0, ""};
  c.detail = fmt::format("{}/{} videos exact within +-1 (worst offset {}), single thread {:.2f}s{}",
                         static_cast<int>(suite.size()) - mismatched, suite.size(), worst_offset, seconds, detail);
  return c;
}

Check criterion_affine_round_trip() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> log_s(std::log(0.1), std::log(10.0));
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> radius(0.0, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    MotionParams p;
    p.scale = std::exp(log_s(rng));
    p.theta = angle(rng);
    if (p.theta == -std::numbers::pi) p.theta = std::numbers::pi;
    const double r = radius(rng);
    const double phi = angle(rng);
    p.tx = r * std::cos(phi);
    p.ty = r * std::sin(phi);
    const MotionParams q = decompose_affine(compose_similarity(p));
    worst = std::max({worst, std::abs(q.tx - p.tx), std::abs(q.ty - p.ty), std::abs(wrap_angle(q.theta - p.theta)),
                      std::abs(q.scale - p.scale)});
  }
  return {"2 affine round trip", worst < 1e-12, worst, 1e-12, "10000 random similarities"};
}

Check criterion_lk_accuracy() {
  const Point2 shifts[] = {{1, 0}, {0, 1}, {2, -3}, {4, 4}, {-4, 0}, {0.5, 0}, {0, -0.5}, {1.5, 2.5}, {-3.5, 3.5}, {4, -2.5}};
  double worst = 0.0;
  std::size_t min_tracks = 1u << 30;
  for (std::size_t i = 0; i < std::size(shifts); ++i) {
    SynthSpec spec;
    spec.texture_seed = 100 + i;
    spec.regimes = {{2, {shifts[i].x, shifts[i].y, 0.0, 1.0}}};
    const SynthVideo v = synth_video(spec);
    const auto corners = detect_corners(v.sequence[0]);
    const auto tracks = track_corners(v.sequence[0], v.sequence[1], corners);
    double err = 0.0;
    std::size_t n = 0;
    for (const TrackedPair& t : tracks) {
      if (t.status != TrackStatus::Ok) continue;
      err += std::hypot(t.dst.x - t.src.x - shifts[i].x, t.dst.y - t.src.y - shifts[i].y);
      ++n;
    }
    min_tracks = std::min(min_tracks, n);
    worst = std::max(worst, n ? err / static_cast<double>(n) : 1e9);
  }
  return {"3 LK accuracy", worst < 0.2, worst, 0.2,
          fmt::format("worst mean error over {} shifts, >= {} tracks each", std::size(shifts), min_tracks)};
}

Check criterion_ransac_robustness() {
  int failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(5000 + trial);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MotionParams truth{unit(rng) * 40 - 20, unit(rng) * 40 - 20, (unit(rng) * 2 - 1) * 3.1, 0.5 + 1.5 * unit(rng)};
    const AffineMatrix m = compose_similarity(truth);
    std::vector<TrackedPair> pairs;
    for (int i = 0; i < 50; ++i) {
      TrackedPair p;
      p.src = {unit(rng) * 128, unit(rng) * 128};
      p.dst = m.apply(p.src);
      p.status = TrackStatus::Ok;
      if (i % 5 == 0) {
        Point2 off;
        do {
          off = {unit(rng) * 60 - 30, unit(rng) * 60 - 30};
        } while (std::hypot(off.x, off.y) < 5.0);
        p.dst = {p.dst.x + off.x, p.dst.y + off.y};
      }
      pairs.push_back(p);
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    RansacParams params;
    params.seed = static_cast<std::uint64_t>(trial);
    const MotionParams got = decompose_affine(estimate_similarity(pairs, params).transform);
    const double err = std::max({std::abs(got.tx - truth.tx), std::abs(got.ty - truth.ty),
                                 std::abs(wrap_angle(got.theta - truth.theta)), std::abs(got.scale - truth.scale)});
    worst = std::max(worst, err);
    if (!(err < 1e-6)) ++failures;
  }
  return {"4 RANSAC robustness", failures == 0, worst, 1e-6, fmt::format("{} failures in 100 trials, 20% outliers", failures)};
}

Check criterion_gradients() {
  const auto suite = gradcheck_suite();
  double worst_op = 0.0;
  double worst_module = 0.0;
  int failed = 0;
  for (const Check& c : suite) {
    (c.name.starts_with("op.") ? worst_op : worst_module) = std::max(c.name.starts_with("op.") ? worst_op : worst_module, c.value);
    if (!c.passed) ++failed;
  }
  return {"5 gradient suite", failed == 0, std::max(worst_op, worst_module), 1e-4,
          fmt::format("{} checks, {} failed; per-op max {:.3e} (< 1e-5), modules max {:.3e}", suite.size(), failed,
                      worst_op, worst_module)};
}

Check criterion_attention_equivalence() {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  for (int cfg = 0; cfg < 50; ++cfg) {
    std::uniform_int_distribution<int> nv_dist(1, 64), na_dist(0, 4), small(0, 7);
    const std::size_t nv = static_cast<std::size_t>(nv_dist(rng));
    const std::size_t na = static_cast<std::size_t>(na_dist(rng));
    const std::size_t dim = cfg % 2 == 0 ? 32 : 64;
    const std::size_t heads = 4;
    AttentionWeights<float> w32 = AttentionWeights<float>::init(dim, 700 + cfg);
    // Larger weights than the demo init so the scores are far from uniform.
    AttentionWeights<float>::each(w32, [&](const auto&, Tensor32& t) {
      t = uniform<float>(t.shape(), -0.3f, 0.3f, rng);
    });
    const Tensor32 video = randn<float>({nv, dim}, rng);
    std::vector<SpacetimeIndex> vpos;
    for (std::size_t i = 0; i < nv; ++i) vpos.push_back({small(rng), small(rng), small(rng)});
    Tensor32 anchors;
    std::vector<AnchorTokenIndex> apos;
    if (na > 0) {
      anchors = randn<float>({na, dim}, rng);
      for (std::size_t i = 0; i < na; ++i) apos.push_back({static_cast<int>(i % 3), small(rng), small(rng)});
    }
    const AttentionOutput<float> got = anchor_attention(video, anchors, vpos, apos, w32, heads);

    std::vector<double> joint(video.data().begin(), video.data().end());
    if (na > 0) joint.insert(joint.end(), anchors.data().begin(), anchors.data().end());
    std::vector<SpacetimeIndex> pos = vpos;
    int max_t = 0;
    for (const auto& p : vpos) max_t = std::max(max_t, p.t);
    for (const auto& a : apos) pos.push_back({max_t + 1 + kAnchorTemporalGap + a.clip, a.h, a.w});
    const auto ref = ref_attention(joint, nv + na, joint, nv + na, dim, cast_weights<double>(w32), heads, pos, pos);
    for (std::size_t i = 0; i < nv * dim; ++i) worst = std::max(worst, std::abs(ref[i] - got.video[i]));
    for (std::size_t i = 0; i < na * dim; ++i) worst = std::max(worst, std::abs(ref[nv * dim + i] - got.anchor[i]));
  }
  return {"6 attention equivalence", worst < 1e-5, worst, 1e-5, "50 configs, <= 64 video + 4 anchor tokens, 4 heads, float32 vs double loop"};
}

Check criterion_rope_relative() {
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<int> pos(-50, 50), shift(-1000, 1000);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor32 q = randn<float>({1, 16}, rng);
    const Tensor32 k = randn<float>({1, 16}, rng);
    const SpacetimeIndex pq{pos(rng), pos(rng), pos(rng)};
    const SpacetimeIndex pk{pos(rng), pos(rng), pos(rng)};
    const int d = shift(rng);
    auto dot = [&](SpacetimeIndex a, SpacetimeIndex b) {
      const SpacetimeIndex pa[1] = {a};
      const SpacetimeIndex pb[1] = {b};
      return sum(mul(rope_apply(q, pa), rope_apply(k, pb))).item();
    };
    const double base = dot(pq, pk);
    const double moved = dot({pq.t + d, pq.h, pq.w}, {pk.t + d, pk.h, pk.w});
    worst = std::max(worst, static_cast<double>(std::abs(base - moved)));
  }

  // Disjointness across random layouts; a negative clip index must trip it.
  int violations = 0;
  std::uniform_int_distribution<int> frames(1, 40), clips(1, 12), coord(0, 15);
  for (int trial = 0; trial < 1000; ++trial) {
    const int f = frames(rng);
    std::vector<SpacetimeIndex> video;
    for (int i = 0; i < 30; ++i) video.push_back({std::uniform_int_distribution<int>(0, f - 1)(rng), coord(rng), coord(rng)});
    std::vector<AnchorTokenIndex> anchors;
    const int l = clips(rng);
    for (int c = 0; c < l; ++c) anchors.push_back({c, coord(rng), coord(rng)});
    try {
      int max_t = 0;
      for (const auto& v : video) max_t = std::max(max_t, v.t);
      for (const auto& a : shifted_anchor_positions(video, anchors)) {
        if (a.t <= max_t) ++violations;
      }
    } catch (const Error&) {
      ++violations;
    }
  }
  bool guard_fires = false;
  try {
    const SpacetimeIndex v[1] = {{3, 0, 0}};
    const AnchorTokenIndex a[1] = {{-kAnchorTemporalGap - 2, 0, 0}};
    shifted_anchor_positions(v, a);
  } catch (const Error& e) {
    guard_fires = e.code() == ErrorCode::IndexOverlap;
  }
  return {"7 RoPE relative position", worst < 1e-5 && violations == 0 && guard_fires, worst, 1e-5,
          fmt::format("1000 shift trials; {} overlaps in 1000 layouts; guard {}", violations,
                      guard_fires ? "fires" : "silent")};
}

Check criterion_acfm_identity() {
  std::mt19937_64 rng(808);
  bool identity = true;
  for (int trial = 0; trial < 20; ++trial) {
    const AcfmWeights<float> w = AcfmWeights<float>::init(8, 900 + trial);
    const Tensor32 video = randn<float>({8, 6, 4, 4}, rng);
    const Tensor32 anchors = randn<float>({8, 2, 4, 4}, rng);
    const int idx[2] = {0, trial % 5 + 1};
    identity = identity && bit_equal(acfm_forward(video, anchors, idx, w), video);
  }

  bool bypass = true;
  for (AcfmPlacement placement : {AcfmPlacement::AfterSelfAttention, AcfmPlacement::AfterCrossAttention}) {
    DiTBlockConfig cfg{16, 2, 32, placement};
    DiTBlockWeights<float> w = DiTBlockWeights<float>::init(cfg, 31);
    const TokenGrid grid{3, 2, 2};
    BlockContext ctx{grid_positions(grid), {}, {0, 2}, grid};
    for (int c = 0; c < 2; ++c) {
      for (int h = 0; h < 2; ++h) {
        for (int x = 0; x < 2; ++x) ctx.anchor_positions.push_back({c, h, x});
      }
    }
    BlockState<float> in{randn<float>({12, 16}, rng), randn<float>({8, 16}, rng)};
    const Tensor32 text = randn<float>({5, 16}, rng);
    BlockTrace<float> trace;
    dit_block_forward(in, text, ctx, w, cfg, &trace);
    const BlockState<float>& before =
        placement == AcfmPlacement::AfterSelfAttention ? trace.after_acfm : trace.after_self_attention;
    bypass = bypass && bit_equal(before.anchor, trace.after_cross_attention.anchor) &&
             !bit_equal(before.video, trace.after_cross_attention.video);
  }
  return {"8 ACFM identity and bypass", identity && bypass, identity && bypass ? 0.0 : 1.0, 0.0,
          fmt::format("identity at init {}, anchor bypass {}", identity ? "bit-exact" : "broken",
                      bypass ? "bit-exact" : "broken")};
}

Check criterion_latent_bookkeeping() {
  std::mt19937_64 rng(909);
  bool inverse = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ClipLatent> clips;
    const int n = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int i = 0; i < n; ++i) {
      const std::size_t f = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 6)(rng));
      clips.push_back({randn<float>({3, f, 2, 3}, rng), {0, static_cast<int>(4 * f - 3)}, {}});
    }
    const ConcatLatents joined = concat_latents(clips);
    const auto back = split_latents(joined.y, joined.seg_map);
    inverse = inverse && back.size() == clips.size();
    for (std::size_t i = 0; inverse && i < clips.size(); ++i) inverse = bit_equal(back[i].data, clips[i].data);
  }

  bool conserved = true;
  double anchor_err = 0.0;
  PipelineConfig cfg;
  for (int frames : {23, 41, 58}) {
    SynthSpec spec;
    spec.texture_seed = static_cast<std::uint64_t>(frames);
    spec.width = spec.height = 64;
    spec.regimes = {{frames / 2, {3, 0, 0, 1}}, {frames - frames / 2, {0, 0, 0.04, 1}}};
    const SynthVideo v = synth_video(spec);
    const ReconstructionResult r = reconstruct(v.sequence, ReconstructionMode::MotionAware, cfg);
    conserved = conserved && r.frames.size() == v.sequence.size();
    const auto latents = encode_segments(v.sequence, r.clips, cfg.vae);
    const FrameSequence decoded = decode_segments(latents, cfg.vae, v.sequence.format());
    conserved = conserved && decoded.size() == static_cast<std::size_t>(padded_length(r.clips));
    const AnchorSet<float> anchors = select_anchor_latents(std::span<const ClipLatent>(latents));
    for (std::size_t i = 0; i < r.clips.size(); ++i) {
      const Tensor32 expected = toy_vae_transform(frames_to_tensor(v.sequence, r.clips[i].start, 1), cfg.vae);
      anchor_err = std::max(anchor_err, max_abs_diff(expected, anchors.latents[i]));
    }
  }
  const bool ok = inverse && conserved && anchor_err < 1e-5;
  return {"9 latent bookkeeping", ok, anchor_err, 1e-5,
          fmt::format("concat/split {}, frame counts {}", inverse ? "exact" : "broken", conserved ? "conserved" : "lost")};
}

Check criterion_ablation() {
  PipelineConfig cfg;
  double min_gap = 1e9;
  std::string worst;
  for (const SynthSpec& spec : standard_suite()) {
    const SynthVideo v = synth_video(spec);
    const double st = reconstruct(v.sequence, ReconstructionMode::Standard, cfg).psnr;
    const double ma = reconstruct(v.sequence, ReconstructionMode::MotionAware, cfg).psnr;
    if (ma - st < min_gap) {
      min_gap = ma - st;
      worst = fmt::format("ST {:.2f} dB, MA {:.2f} dB", st, ma);
    }
  }
  double static_min = 1e9;
  for (auto [frames, seed] : {std::pair{61, 3}, std::pair{30, 8}}) {
    const SynthVideo v = synth_video(static_spec(frames, static_cast<std::uint64_t>(seed)));
    for (ReconstructionMode m : {ReconstructionMode::Standard, ReconstructionMode::MotionAware}) {
      static_min = std::min(static_min, reconstruct(v.sequence, m, cfg).psnr);
    }
  }
  return {"10 MA vs ST ablation", min_gap >= 1.0 && static_min > 50.0, min_gap, 1.0,
          fmt::format("smallest gap at {}; static minimum {:.2f} dB (> 50)", worst, static_min)};
}

}  // namespace stcdit::verify
