#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "stcdit/anchor.hpp"
#include "stcdit/model.hpp"
#include "stcdit/pipeline.hpp"
#include "stcdit/verify.hpp"
#include "support.hpp"

using namespace stcdit;
using stcdit::test::random_tensor;
using stcdit::test::throws_code;
using stcdit::test::to_vec;

namespace {

std::vector<ClipLatent> latents_with_lengths(std::vector<std::size_t> lengths, std::uint64_t seed) {
  std::vector<ClipLatent> out;
  int start = 0;
  for (std::size_t f : lengths) {
    ClipLatent c;
    c.data = random_tensor<float>({12, f, 4, 4}, seed++);
    c.source = {start, static_cast<int>(1 + 4 * (f - 1))};
    start = c.source.end();
    out.push_back(c);
  }
  return out;
}

template <typename T>
AcfmWeights<T> random_acfm(std::size_t dim, std::uint64_t seed) {
  AcfmWeights<T> w;
  w.anchor_w = random_tensor<T>({dim, 3, 3}, seed, T(-0.5), T(0.5));
  w.anchor_b = random_tensor<T>({dim}, seed + 1, T(-0.5), T(0.5));
  w.gate_w = random_tensor<T>({dim, 3, 3}, seed + 2, T(-0.5), T(0.5));
  w.gate_b = random_tensor<T>({dim}, seed + 3, T(-0.5), T(0.5));
  w.out_w = random_tensor<T>({dim, 3, 3}, seed + 4, T(-0.5), T(0.5));
  w.out_b = random_tensor<T>({dim}, seed + 5, T(-0.5), T(0.5));
  return w;
}

// Frame slice [D, 1, H, W] of a [D, F, H, W] tensor.
template <typename T>
std::vector<T> frame_slice(const Tensor<T>& t, std::size_t frame) {
  const Shape& s = t.shape();
  const std::size_t plane = s[2] * s[3];
  std::vector<T> out;
  for (std::size_t c = 0; c < s[0]; ++c) {
    const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>((c * s[1] + frame) * plane);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(plane));
  }
  return out;
}

// A small block setup: 2 latent frames of 2x2 tokens and one anchor clip.
struct BlockFixture {
  DiTBlockConfig cfg{16, 2, 32, AcfmPlacement::AfterSelfAttention};
  TokenGrid grid{2, 2, 2};
  BlockContext ctx;

  BlockFixture() {
    ctx.video_grid = grid;
    ctx.video_positions = grid_positions(grid);
    for (int h = 0; h < 2; ++h)
      for (int w = 0; w < 2; ++w) ctx.anchor_positions.push_back({0, h, w});
    ctx.anchor_indices = {0};
  }

  template <typename T>
  BlockState<T> state(std::uint64_t seed) const {
    return {random_tensor<T>({grid.count(), cfg.dim}, seed), random_tensor<T>({4, cfg.dim}, seed + 1)};
  }
};

}  // namespace

TEST_SUITE("anchor_select") {
  TEST_CASE("indices are prefix sums of latent lengths") {
    const auto clips = latents_with_lengths({5, 3, 4}, 1);
    const AnchorSet<float> set = select_anchor_latents(clips);
    CHECK(set.size() == 3);
    CHECK(set.clip_start_latent_index == std::vector<int>{0, 5, 8});

    const auto one = latents_with_lengths({9}, 2);
    CHECK(select_anchor_latents(one).clip_start_latent_index == std::vector<int>{0});
    CHECK(throws_code([] { select_anchor_latents(std::span<const ClipLatent>{}); }, ErrorCode::EmptyClipList));
  }

  TEST_CASE("anchors are slices of the concatenated latent") {
    const auto clips = latents_with_lengths({5, 3, 4}, 3);
    const ConcatLatents cat = concat_latents(clips);
    const AnchorSet<float> set = select_anchor_latents(clips);
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(set.latents[i].shape() == Shape{12, 1, 4, 4});
      CHECK(to_vec(set.latents[i].cast<double>()) ==
            to_vec(Tensor32({12, 1, 4, 4}, frame_slice(cat.y, static_cast<std::size_t>(set.clip_start_latent_index[i])))
                       .cast<double>()));
    }
  }
}

TEST_SUITE("afr") {
  TEST_CASE("halves the spatial size") {
    const auto w = AfrWeights<float>::init(8, 8, 1);
    const Tensor32 out = afr_forward(random_tensor<float>({8, 1, 16, 16}, 2), w);
    CHECK(out.shape() == Shape{8, 1, 8, 8});
    const auto narrow = AfrWeights<float>::init(8, 3, 1);
    CHECK(afr_forward(random_tensor<float>({8, 1, 16, 16}, 2), narrow).shape() == Shape{3, 1, 8, 8});
    CHECK(throws_code([&] { afr_forward(random_tensor<float>({8, 1, 15, 16}, 2), w); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("zero weights give zero output") {
    AfrWeights<double> w = AfrWeights<double>::init(4, 4, 3);
    AfrWeights<double>::each(w, [](const auto&, Tensor64& t) { t = Tensor64::zeros(t.shape()); });
    const Tensor64 out = afr_forward(random_tensor<double>({4, 1, 8, 8}, 4), w);
    for (double v : out.data()) CHECK(v == 0.0);
  }

  TEST_CASE("equals the explicit op chain bit for bit") {
    const auto w = AfrWeights<float>::init(6, 6, 5);
    const Tensor32 x = random_tensor<float>({6, 1, 8, 8}, 6);
    const Tensor32 main = maxpool2(dconv3x3(pconv1x1(x, w.pconv1_w, w.pconv1_b), w.dconv1_w, w.dconv1_b));
    const Tensor32 merged = add(main, tconv2x2s2(x, w.tconv_w, w.tconv_b));
    const Tensor32 want = dconv3x3(pconv1x1(silu(merged), w.pconv2_w, w.pconv2_b), w.dconv2_w, w.dconv2_b);
    CHECK(bit_equal(afr_forward(x, w), want));
  }

  TEST_CASE("anchors are refined independently") {
    const auto clips = latents_with_lengths({2, 2, 2}, 7);
    const auto w = AfrWeights<float>::init(12, 12, 8);
    const AnchorSet<float> base = refine_anchors(select_anchor_latents(clips), w);
    REQUIRE(base.features.size() == 3);
    CHECK(base.features[0].shape() == Shape{12, 1, 2, 2});

    AnchorSet<float> changed = select_anchor_latents(clips);
    changed.latents[1] = random_tensor<float>({12, 1, 4, 4}, 99);
    changed = refine_anchors(changed, w);
    CHECK(bit_equal(changed.features[0], base.features[0]));
    CHECK(bit_equal(changed.features[2], base.features[2]));
    CHECK_FALSE(bit_equal(changed.features[1], base.features[1]));
  }
}

TEST_SUITE("tokens") {
  TEST_CASE("assembled latent layout") {
    const Tensor32 y = random_tensor<float>({4, 3, 4, 4}, 10);
    const VideoLatent<float> a = assemble_video_latent(y, 5);
    CHECK(a.assembled.shape() == Shape{12, 3, 4, 4});
    const std::size_t block = 4 * 3 * 4 * 4;
    for (std::size_t i = 0; i < block; ++i) {
      CHECK(a.assembled[i] == y[i]);
      CHECK(a.assembled[block + i] == a.noise[i]);
      CHECK(a.assembled[2 * block + i] == 1.0f);
    }
    CHECK(bit_equal(assemble_video_latent(y, 5).noise, a.noise));
    CHECK(max_abs_diff(assemble_video_latent(y, 6).noise, a.noise) > 0.0);
  }

  TEST_CASE("patchify layout") {
    const Tensor32 v = random_tensor<float>({12, 2, 4, 4}, 11);
    const PatchTokens<float> p = patchify(v);
    CHECK(p.tokens.shape() == Shape{8, 48});
    CHECK(p.grid == TokenGrid{2, 2, 2});
    CHECK(p.positions[4] == SpacetimeIndex{1, 0, 0});
    CHECK(p.positions[7] == SpacetimeIndex{1, 1, 1});
    // Token (1,0,0): frame 1, rows 0-1, cols 0-1, channel-major.
    for (std::size_t c = 0; c < 12; ++c)
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t q = 0; q < 2; ++q)
          CHECK(p.tokens[4 * 48 + c * 4 + r * 2 + q] == v[((c * 2 + 1) * 4 + r) * 4 + q]);
    CHECK(bit_equal(unpatchify(p.tokens, 12, p.grid), v));
    CHECK(throws_code([] { patchify(Tensor32::zeros({1, 1, 3, 4})); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("feature maps and tokens convert exactly") {
    const TokenGrid g{3, 2, 4};
    const Tensor32 t = random_tensor<float>({g.count(), 5}, 12);
    const Tensor32 f = tokens_to_features(t, g);
    CHECK(f.shape() == Shape{5, 3, 2, 4});
    CHECK(bit_equal(features_to_tokens(f), t));
    CHECK(f[((2 * 3 + 1) * 2 + 1) * 4 + 3] == t[(1 * 8 + 1 * 4 + 3) * 5 + 2]);
  }

  TEST_CASE("anchor tokens cover every refined position") {
    const std::vector<Tensor32> feats{random_tensor<float>({3, 1, 2, 2}, 13), random_tensor<float>({3, 1, 2, 2}, 14)};
    const Tensor32 w = random_tensor<float>({3, 8}, 15);
    const Tensor32 b = random_tensor<float>({8}, 16);
    const AnchorTokens<float> at = tokenize_anchor_features<float>(feats, w, b);
    CHECK(at.tokens.shape() == Shape{8, 8});
    REQUIRE(at.positions.size() == 8);
    CHECK(at.positions[5].clip == 1);
    CHECK(at.positions[5].h == 0);
    CHECK(at.positions[5].w == 1);
    double want = b[2];
    for (std::size_t c = 0; c < 3; ++c) want += double(feats[1][c * 4 + 1]) * w[c * 8 + 2];
    CHECK(std::abs(at.tokens[5 * 8 + 2] - want) < 1e-6);
    CHECK_FALSE(tokenize_anchor_features<float>({}, w, b).tokens.defined());
  }
}

TEST_SUITE("attention") {
  TEST_CASE("shifted anchor indices never collide with video indices") {
    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 1000; ++trial) {
      const TokenGrid g{1 + rng() % 12, 1 + rng() % 5, 1 + rng() % 5};
      const auto video = grid_positions(g);
      std::vector<AnchorTokenIndex> anchors;
      const int clips = 1 + static_cast<int>(rng() % 4);
      for (int c = 0; c < clips; ++c) anchors.push_back({c, static_cast<int>(rng() % g.height), static_cast<int>(rng() % g.width)});
      const auto shifted = shifted_anchor_positions(video, anchors);
      int max_video = 0;
      for (const auto& p : video) max_video = std::max(max_video, p.t);
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        CHECK(shifted[i].t == static_cast<int>(g.frames) + kAnchorTemporalGap + anchors[i].clip);
        CHECK(shifted[i].t > max_video);
        CHECK(shifted[i].h == anchors[i].h);
        CHECK(shifted[i].w == anchors[i].w);
      }
    }
    const auto video = grid_positions({3, 1, 1});
    const AnchorTokenIndex a{0, 0, 0};
    CHECK(throws_code([&] { shifted_anchor_positions(video, std::span(&a, 1), -4); }, ErrorCode::IndexOverlap));
    const AnchorTokenIndex neg{-8, 0, 0};
    CHECK(throws_code([&] { shifted_anchor_positions(video, std::span(&neg, 1)); }, ErrorCode::IndexOverlap));
  }

  TEST_CASE("a single token attends only to itself") {
    const auto w = AttentionWeights<double>::init(8, 21);
    const Tensor64 x = random_tensor<double>({1, 8}, 22);
    const Tensor64 out = multi_head_attention(x, x, w, 1);
    const Tensor64 want = linear(linear(x, w.wv, w.bv), w.wo, w.bo);
    CHECK(max_abs_diff(out, want) < 1e-12);

    const SpacetimeIndex p{0, 0, 0};
    const auto res = anchor_attention(x, Tensor64{}, std::span(&p, 1), {}, w, 1);
    CHECK(max_abs_diff(res.video, want) < 1e-12);
    CHECK_FALSE(res.anchor.defined());
  }

  TEST_CASE("matches the per-query reference loop") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t dim = trial % 2 ? 32 : 64;
      const TokenGrid g{1 + rng() % 3, 1 + rng() % 3, 1 + rng() % 3};
      const std::size_t na = rng() % 5;
      const auto w = AttentionWeights<double>::init(dim, rng());
      // Larger weights than the init scale make the softmax far from uniform.
      const auto big = [&](const Tensor64& t) { return scale(t, 20.0); };
      const AttentionWeights<double> ws{big(w.wq), w.bq, big(w.wk), w.bk, big(w.wv), w.bv, big(w.wo), w.bo};
      const Tensor64 video = uniform<double>({g.count(), dim}, -1, 1, rng);
      const auto vpos = grid_positions(g);
      std::vector<AnchorTokenIndex> apos;
      for (std::size_t i = 0; i < na; ++i) apos.push_back({static_cast<int>(i / 2), static_cast<int>(i % 2), 0});
      const Tensor64 anchor = na ? uniform<double>({na, dim}, -1, 1, rng) : Tensor64{};
      const auto got = anchor_attention(video, anchor, vpos, apos, ws, 4);

      const auto shifted = shifted_anchor_positions(vpos, apos);
      std::vector<double> all = to_vec(video);
      std::vector<SpacetimeIndex> pos = vpos;
      if (na) {
        const auto av = to_vec(anchor);
        all.insert(all.end(), av.begin(), av.end());
        pos.insert(pos.end(), shifted.begin(), shifted.end());
      }
      const std::size_t n = g.count() + na;
      const auto want = verify::ref_attention(all, n, all, n, dim, ws, 4, pos, pos);
      std::vector<double> joined = to_vec(got.video);
      if (na) {
        const auto a = to_vec(got.anchor);
        joined.insert(joined.end(), a.begin(), a.end());
      }
      double worst = 0;
      for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(joined[i] - want[i]));
      CHECK(worst < 1e-9);
    }
  }

  TEST_CASE("permuting anchors permutes only the anchor output") {
    const std::size_t dim = 32;
    const auto w = AttentionWeights<double>::init(dim, 24);
    const TokenGrid g{2, 2, 2};
    const auto vpos = grid_positions(g);
    const Tensor64 video = random_tensor<double>({g.count(), dim}, 25);
    const Tensor64 anchor = random_tensor<double>({4, dim}, 26);
    const std::vector<AnchorTokenIndex> apos{{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
    const auto base = anchor_attention(video, anchor, vpos, apos, w, 4);

    const std::size_t perm[] = {2, 0, 3, 1};
    std::vector<std::size_t> idx;
    for (std::size_t p : perm)
      for (std::size_t d = 0; d < dim; ++d) idx.push_back(p * dim + d);
    std::vector<AnchorTokenIndex> ppos;
    for (std::size_t p : perm) ppos.push_back(apos[p]);
    const auto moved = anchor_attention(video, take(anchor, idx, Shape{4, dim}), vpos, ppos, w, 4);
    CHECK(max_abs_diff(moved.video, base.video) < 1e-12);
    CHECK(max_abs_diff(moved.anchor, take(base.anchor, idx, Shape{4, dim})) < 1e-12);
  }

  TEST_CASE("head split must give even rotary bands") {
    const auto w = AttentionWeights<double>::init(16, 27);
    const Tensor64 x = random_tensor<double>({2, 16}, 28);
    const std::vector<SpacetimeIndex> p(2);
    CHECK(throws_code([&] { multi_head_attention(x, x, w, 4, p, p); }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([&] { multi_head_attention(x, x, w, 3); }, ErrorCode::ShapeMismatch));
    CHECK_NOTHROW(multi_head_attention(x, x, w, 2, p, p));
  }
}

TEST_SUITE("acfm") {
  TEST_CASE("identity at initialisation") {
    const auto w = AcfmWeights<float>::init(8, 30);
    const Tensor32 video = random_tensor<float>({8, 6, 4, 4}, 31);
    const Tensor32 anchors = random_tensor<float>({8, 2, 4, 4}, 32);
    const int idx[] = {0, 3};
    CHECK(bit_equal(acfm_forward(video, anchors, idx, w), video));
    CHECK(bit_equal(acfm_forward(video, Tensor32{}, {}, w), video));
  }

  TEST_CASE("zero gate leaves the stack unmodulated") {
    AcfmWeights<double> w = random_acfm<double>(4, 33);
    w.gate_w = Tensor64::zeros({4, 3, 3});
    w.gate_b = Tensor64::zeros({4});
    const Tensor64 video = random_tensor<double>({4, 5, 4, 4}, 34);
    const Tensor64 anchors = random_tensor<double>({4, 2, 4, 4}, 35);
    const int idx[] = {0, 2};
    const Tensor64 plain = add(dconv3x3(video, w.out_w, w.out_b), video);
    CHECK(bit_equal(acfm_forward(video, anchors, idx, w), plain));
  }

  TEST_CASE("only anchor frames change when the output conv is zero") {
    AcfmWeights<double> w = random_acfm<double>(4, 36);
    w.out_w = Tensor64::zeros({4, 3, 3});
    w.out_b = Tensor64::zeros({4});
    const Tensor64 video = random_tensor<double>({4, 5, 4, 4}, 37);
    const Tensor64 anchors = random_tensor<double>({4, 2, 4, 4}, 38);
    const int idx[] = {1, 4};
    const Tensor64 out = acfm_forward(video, anchors, idx, w);
    for (std::size_t f = 0; f < 5; ++f) {
      const bool anchored = f == 1 || f == 4;
      CHECK((frame_slice(out, f) == frame_slice(video, f)) == !anchored);
    }
    // The modulation itself: refined * gelu(dconv(refined)).
    const Tensor64 a1 = Tensor64({4, 1, 4, 4}, frame_slice(anchors, 1));
    const Tensor64 refined = add(dconv3x3(a1, w.anchor_w, w.anchor_b), a1);
    const Tensor64 mod = mul(refined, gelu(dconv3x3(refined, w.gate_w, w.gate_b)));
    const Tensor64 want = add(Tensor64({4, 1, 4, 4}, frame_slice(video, 4)), mod);
    CHECK(max_abs_diff(Tensor64({4, 1, 4, 4}, frame_slice(out, 4)), want) < 1e-12);
  }

  TEST_CASE("bad anchor indices") {
    const auto w = AcfmWeights<float>::init(2, 39);
    const Tensor32 video = Tensor32::zeros({2, 3, 2, 2});
    const Tensor32 anchors = Tensor32::zeros({2, 2, 2, 2});
    const int repeated[] = {1, 1};
    const int outside[] = {0, 3};
    const int short_list[] = {0};
    CHECK(throws_code([&] { acfm_forward(video, anchors, repeated, w); }, ErrorCode::IndexOutOfRange));
    CHECK(throws_code([&] { acfm_forward(video, anchors, outside, w); }, ErrorCode::IndexOutOfRange));
    CHECK(throws_code([&] { acfm_forward(video, anchors, short_list, w); }, ErrorCode::ShapeMismatch));
  }
}

TEST_SUITE("block") {
  TEST_CASE("cross-attention bypasses anchor tokens") {
    const BlockFixture fx;
    const auto w = DiTBlockWeights<float>::init(fx.cfg, 40);
    const Tensor32 text = random_tensor<float>({3, fx.cfg.dim}, 41);
    BlockTrace<float> trace;
    dit_block_forward(fx.state<float>(42), text, fx.ctx, w, fx.cfg, &trace);
    CHECK(bit_equal(trace.after_cross_attention.anchor, trace.after_acfm.anchor));
    CHECK(max_abs_diff(trace.after_cross_attention.video, trace.after_acfm.video) > 0.0);
  }

  TEST_CASE("no text tokens skips cross-attention") {
    const BlockFixture fx;
    const auto w = DiTBlockWeights<float>::init(fx.cfg, 43);
    BlockTrace<float> trace;
    const auto out = dit_block_forward(fx.state<float>(44), Tensor32{}, fx.ctx, w, fx.cfg, &trace);
    CHECK(bit_equal(trace.after_cross_attention.video, trace.after_acfm.video));
    CHECK(out.video.shape() == Shape{8, fx.cfg.dim});
    CHECK(out.anchor.shape() == Shape{4, fx.cfg.dim});
  }

  TEST_CASE("acfm is the identity right after initialisation") {
    const BlockFixture fx;
    const auto w = DiTBlockWeights<float>::init(fx.cfg, 45);
    BlockTrace<float> trace;
    dit_block_forward(fx.state<float>(46), Tensor32{}, fx.ctx, w, fx.cfg, &trace);
    CHECK(bit_equal(trace.after_acfm.video, trace.after_self_attention.video));
  }

  TEST_CASE("two stacked blocks are deterministic") {
    const BlockFixture fx;
    const auto w0 = DiTBlockWeights<float>::init(fx.cfg, 47);
    const auto w1 = DiTBlockWeights<float>::init(fx.cfg, 48);
    auto run = [&] {
      auto s = dit_block_forward(fx.state<float>(49), Tensor32{}, fx.ctx, w0, fx.cfg);
      return dit_block_forward(s, Tensor32{}, fx.ctx, w1, fx.cfg);
    };
    const auto a = run();
    const auto b = run();
    CHECK(max_abs_diff(a.video, b.video) == 0.0);
    CHECK(max_abs_diff(a.anchor, b.anchor) == 0.0);
  }

  TEST_CASE("removing anchors changes the video stream") {
    BlockFixture fx;
    const auto w = DiTBlockWeights<float>::init(fx.cfg, 50);
    const BlockState<float> in = fx.state<float>(51);
    const auto with = dit_block_forward(in, Tensor32{}, fx.ctx, w, fx.cfg);
    BlockContext bare = fx.ctx;
    bare.anchor_positions.clear();
    bare.anchor_indices.clear();
    const auto without = dit_block_forward(BlockState<float>{in.video, {}}, Tensor32{}, bare, w, fx.cfg);
    CHECK(max_abs_diff(with.video, without.video) > 0.0);
    CHECK_FALSE(without.anchor.defined());
  }

  TEST_CASE("placement after cross-attention still runs") {
    BlockFixture fx;
    fx.cfg.acfm_placement = AcfmPlacement::AfterCrossAttention;
    const auto w = DiTBlockWeights<float>::init(fx.cfg, 52);
    const Tensor32 text = random_tensor<float>({2, fx.cfg.dim}, 53);
    BlockTrace<float> trace;
    const auto out = dit_block_forward(fx.state<float>(54), text, fx.ctx, w, fx.cfg, &trace);
    CHECK(out.video.shape() == Shape{8, fx.cfg.dim});
  }

  TEST_CASE("one block passes a finite-difference check") {
    const BlockFixture fx;
    auto w = DiTBlockWeights<double>::init(fx.cfg, 55);
    w.acfm = random_acfm<double>(fx.cfg.dim, 56);
    const auto in = fx.state<double>(57);
    const Tensor64 text = random_tensor<double>({2, fx.cfg.dim}, 58);
    const Tensor64 proj = random_tensor<double>({8, fx.cfg.dim}, 59);
    const auto r = grad_check(
        [&](const Tensor64& v) {
          return sum(mul(dit_block_forward(BlockState<double>{v, in.anchor}, text, fx.ctx, w, fx.cfg).video, proj));
        },
        in.video, 1e-5, 48, 60);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_SUITE("model") {
  TEST_CASE("restored latent keeps the latent shape") {
    ModelConfig cfg;
    cfg.dim = 32;
    cfg.blocks = 1;
    const auto w = RestorationWeights<float>::init(cfg, 70);
    const Tensor32 y = random_tensor<float>({12, 4, 4, 4}, 71);
    const std::size_t lengths[] = {3, 1};
    const Tensor32 out = restoration_forward(y, lengths, w, cfg, 72);
    CHECK(out.shape() == y.shape());
    CHECK(bit_equal(out, restoration_forward(y, lengths, w, cfg, 72)));
    CHECK(max_abs_diff(out, restoration_forward(y, lengths, w, cfg, 72, false)) > 0.0);

    const std::size_t wrong[] = {3, 2};
    CHECK(throws_code([&] { restoration_forward(y, wrong, w, cfg, 72); }, ErrorCode::SegMapMismatch));
    ModelConfig tight = cfg;
    tight.max_tokens = 10;
    CHECK(throws_code([&] { restoration_forward(y, lengths, w, tight, 72); }, ErrorCode::InvalidConfig));
  }

  TEST_CASE("named weights round trip") {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.blocks = 2;
    const auto w = RestorationWeights<float>::init(cfg, 73);
    const NamedTensors named = to_named(w);
    const bool has_block = std::any_of(named.begin(), named.end(), [](const auto& p) { return p.first == "block1.self_attn.wq"; });
    CHECK(has_block);
    const NamedTensors again = to_named(from_named(named, cfg));
    REQUIRE(again.size() == named.size());
    for (std::size_t i = 0; i < named.size(); ++i) CHECK(bit_equal(again[i].second, named[i].second));

    NamedTensors missing(named.begin() + 1, named.end());
    CHECK(throws_code([&] { from_named(missing, cfg); }, ErrorCode::InvalidConfig));
  }

  TEST_CASE("weight init is seeded") {
    ModelConfig cfg;
    cfg.blocks = 1;
    const auto a = to_named(RestorationWeights<float>::init(cfg, 1));
    const auto b = to_named(RestorationWeights<float>::init(cfg, 1));
    const auto c = to_named(RestorationWeights<float>::init(cfg, 2));
    CHECK(bit_equal(a[0].second, b[0].second));
    CHECK_FALSE(bit_equal(a[0].second, c[0].second));
  }
}
