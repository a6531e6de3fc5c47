#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/model.hpp"
#include "stcdit/motion.hpp"
#include "stcdit/verify.hpp"

namespace stcdit::verify {

namespace {

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : 1e300;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Check tolerance(const std::string& name, double value, double limit, std::string detail = {}) {
  return {name, value < limit, value, limit, std::move(detail)};
}

Check exact(const std::string& name, bool ok, std::string detail = {}) {
  return {name, ok, ok ? 0.0 : 1.0, 0.0, std::move(detail)};
}

std::vector<double> vec(const Tensor64& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::vector<Check> oracle_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto rnd = [&](Shape s) { return uniform<double>(std::move(s), -1.0, 1.0, rng); };
  std::vector<Check> out;

  // Convolution family against direct loops.
  const Tensor64 x = rnd({3, 2, 6, 8});
  const Tensor64 dk = rnd({3, 3, 3}), db = rnd({3});
  out.push_back(tolerance("conv.dconv3x3", max_diff(vec(dconv3x3(x, dk, db)), ref_dconv3x3(vec(x), 3, 2, 6, 8, vec(dk), vec(db))), 1e-12));
  const Tensor64 pw = rnd({5, 3}), pb = rnd({5});
  out.push_back(tolerance("conv.pconv1x1", max_diff(vec(pconv1x1(x, pw, pb)), ref_pconv1x1(vec(x), 3, 96, vec(pw), vec(pb), 5)), 1e-12));
  const Tensor64 tw = rnd({5, 3, 2, 2});
  out.push_back(tolerance("conv.tconv2x2s2", max_diff(vec(tconv2x2s2(x, tw, pb)), ref_tconv2x2s2(vec(x), 3, 2, 6, 8, vec(tw), vec(pb), 5)), 1e-12));
  out.push_back(tolerance("conv.maxpool2", max_diff(vec(maxpool2(x)), ref_maxpool2(vec(x), 3, 2, 6, 8)), 1e-15));

  // Rotary embedding against complex rotation.
  const Tensor64 tok = rnd({6, 16});
  std::vector<SpacetimeIndex> pos;
  for (int i = 0; i < 6; ++i) pos.push_back({i * 7 - 9, i, 30 - 5 * i});
  out.push_back(tolerance("rope.reference", max_diff(vec(rope_apply(tok, pos)), ref_rope(vec(tok), 6, 16, pos)), 1e-12));

  // Softmax shift invariance of one score row.
  {
    const Tensor64 scores = rnd({4, 7});
    std::vector<double> shifted = vec(scores);
    for (std::size_t j = 0; j < 7; ++j) shifted[2 * 7 + j] += 123.25;
    out.push_back(tolerance("attention.softmax_shift",
                            max_abs_diff(softmax_lastdim(scores), softmax_lastdim(Tensor64(scores.shape(), shifted))), 1e-6));
  }

  // Cross-attention (no positions) against the loop oracle.
  {
    AttentionWeights<double> w = AttentionWeights<double>::init(16, seed + 3);
    AttentionWeights<double>::each(w, [&](const auto&, Tensor64& t) { t = rnd(t.shape()); });
    const Tensor64 q = rnd({5, 16}), kv = rnd({3, 16});
    out.push_back(tolerance("attention.cross_reference",
                            max_diff(vec(multi_head_attention(q, kv, w, 2)), ref_attention(vec(q), 5, vec(kv), 3, 16, w, 2, {}, {})),
                            1e-12));
    // One key: softmax over one element is 1, so the output is the value path.
    const Tensor64 one = rnd({1, 16});
    const Tensor64 value_path = linear(linear(one, w.wv, w.bv), w.wo, w.bo);
    const AttentionOutput<double> single = anchor_attention(one, Tensor64(), std::vector<SpacetimeIndex>{{0, 0, 0}}, {}, w, 2);
    out.push_back(tolerance("attention.single_token", max_abs_diff(single.video, value_path), 1e-12));
  }

  out.push_back(criterion_attention_equivalence());

  // AFR equals the literal op chain, bit for bit.
  {
    AfrWeights<double> w = AfrWeights<double>::init(4, 6, seed + 4);
    const Tensor64 a = rnd({4, 1, 8, 8});
    const Tensor64 chain = dconv3x3(
        pconv1x1(silu(add(maxpool2(dconv3x3(pconv1x1(a, w.pconv1_w, w.pconv1_b), w.dconv1_w, w.dconv1_b)),
                          tconv2x2s2(a, w.tconv_w, w.tconv_b))),
                 w.pconv2_w, w.pconv2_b),
        w.dconv2_w, w.dconv2_b);
    out.push_back(exact("afr.composition", bit_equal(afr_forward(a, w), chain)));
  }

  // ACFM masking: with the output conv zeroed, only anchor frames move.
  {
    AcfmWeights<double> w = AcfmWeights<double>::init(4, seed + 5);
    w.gate_w = rnd(w.gate_w.shape());
    w.gate_b = rnd(w.gate_b.shape());
    const Tensor64 video = rnd({4, 6, 5, 5});
    const Tensor64 anchors = rnd({4, 2, 5, 5});
    const int idx[2] = {1, 4};
    const Tensor64 y = acfm_forward(video, anchors, idx, w);
    bool others_equal = true;
    bool anchors_moved = true;
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t t = 0; t < 6; ++t) {
        bool same = true;
        for (std::size_t i = 0; i < 25; ++i) {
          const std::size_t k = (c * 6 + t) * 25 + i;
          same = same && y[k] == video[k];
        }
        if (t == 1 || t == 4) {
          anchors_moved = anchors_moved && !same;
        } else {
          others_equal = others_equal && same;
        }
      }
    }
    out.push_back(exact("acfm.masking", others_equal && anchors_moved));
  }

  out.push_back(criterion_acfm_identity());

  // With value/output projections and ACFM zeroed, anchors cannot reach the
  // video stream: the block matches one run with anchors removed.
  {
    DiTBlockConfig cfg{16, 2, 32, AcfmPlacement::AfterSelfAttention};
    DiTBlockWeights<float> w = DiTBlockWeights<float>::init(cfg, seed + 6);
    w.self_attn.wv = Tensor32::zeros(w.self_attn.wv.shape());
    w.self_attn.wo = Tensor32::zeros(w.self_attn.wo.shape());
    std::mt19937_64 r32(seed + 7);
    const TokenGrid grid{2, 2, 3};
    std::vector<AnchorTokenIndex> apos;
    for (int h = 0; h < 2; ++h) {
      for (int x = 0; x < 3; ++x) apos.push_back({0, h, x});
    }
    const BlockState<float> with{randn<float>({12, 16}, r32), randn<float>({6, 16}, r32)};
    const BlockState<float> without{with.video, Tensor32()};
    const BlockContext ctx_with{grid_positions(grid), apos, {0}, grid};
    const BlockContext ctx_without{grid_positions(grid), {}, {}, grid};
    const auto a = dit_block_forward(with, Tensor32(), ctx_with, w, cfg);
    const auto b = dit_block_forward(without, Tensor32(), ctx_without, w, cfg);
    out.push_back(exact("block.anchors_removed", bit_equal(a.video, b.video) && a.video.shape()[0] == 12));
  }

  // Patchify index map: token (t, 0, 0) holds frame t's top-left 2x2 patch.
  {
    const Tensor64 v = rnd({12, 2, 4, 4});
    const PatchTokens<double> p = patchify(v, 2);
    bool ok = p.tokens.shape() == Shape{8, 48} && bit_equal(unpatchify(p.tokens, 12, p.grid, 2), v);
    const std::size_t n = 4;  // (t=1, h=0, w=0)
    for (std::size_t c = 0; c < 12; ++c) {
      for (std::size_t py = 0; py < 2; ++py) {
        for (std::size_t px = 0; px < 2; ++px) {
          ok = ok && p.tokens[n * 48 + (c * 2 + py) * 2 + px] == v[((c * 2 + 1) * 4 + py) * 4 + px];
        }
      }
    }
    out.push_back(exact("tokens.patchify_map", ok && p.positions[n] == SpacetimeIndex{1, 0, 0}));
  }

  out.push_back(criterion_affine_round_trip());
  out.push_back(criterion_lk_accuracy());
  out.push_back(criterion_ransac_robustness());
  out.push_back(criterion_rope_relative());

  // Segmentation invariants over random break sets.
  {
    int bad = 0;
    std::uniform_int_distribution<int> len(1, 150);
    for (int trial = 0; trial < 2000; ++trial) {
      const int n = len(rng);
      std::vector<int> breaks;
      for (int b = 1; b < n; ++b) {
        if (std::uniform_int_distribution<int>(0, 9)(rng) == 0) breaks.push_back(b);
      }
      const auto clips = segment_video(n, breaks);
      int at = 0;
      for (const ClipSpec& c : clips) {
        if (c.start != at || c.length % 4 != 1) ++bad;
        if (clips.size() > 1 && c.length < 5) ++bad;
        at = c.end();
      }
      if (at < n || at - n >= 4) ++bad;
    }
    out.push_back(tolerance("segments.invariants", bad, 1, "2000 random break sets"));
  }

  out.push_back(criterion_latent_bookkeeping());
  return out;
}

}  // namespace stcdit::verify
