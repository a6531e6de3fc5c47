#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stcdit/error.hpp"
#include "stcdit/latent.hpp"
#include "stcdit/tensor.hpp"
#include "stcdit/tensor_io.hpp"

namespace stcdit {

// ---- anchor selection and refinement ----------------------------------------

template <typename T>
struct AnchorSet {
  std::vector<Tensor<T>> latents;  // [C, 1, H, W] per clip
  std::vector<int> clip_start_latent_index;
  std::vector<Tensor<T>> features;  // filled by refine_anchors

  std::size_t size() const { return latents.size(); }
};

/// Temporal slice 0 of every clip latent; indices are exclusive prefix sums of
/// the clip latent lengths. Throws EmptyClipList.
template <typename T>
AnchorSet<T> select_anchor_latents(std::span<const Tensor<T>> clip_latents);
AnchorSet<float> select_anchor_latents(std::span<const ClipLatent> clips);

/// Two-branch refinement at half resolution:
///   f = maxpool2(dconv(pconv(x))) + tconv2x2s2(x);  out = dconv(pconv(silu(f))).
/// The second pointwise conv maps to out_channels.
template <typename T>
struct AfrWeights {
  Tensor<T> pconv1_w, pconv1_b, dconv1_w, dconv1_b;
  Tensor<T> tconv_w, tconv_b;
  Tensor<T> pconv2_w, pconv2_b, dconv2_w, dconv2_b;

  static AfrWeights init(std::size_t channels, std::size_t out_channels, std::uint64_t seed);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    f("pconv1_w", s.pconv1_w); f("pconv1_b", s.pconv1_b);
    f("dconv1_w", s.dconv1_w); f("dconv1_b", s.dconv1_b);
    f("tconv_w", s.tconv_w); f("tconv_b", s.tconv_b);
    f("pconv2_w", s.pconv2_w); f("pconv2_b", s.pconv2_b);
    f("dconv2_w", s.dconv2_w); f("dconv2_b", s.dconv2_b);
  }
};

/// anchor [C, 1, H, W] -> [C', 1, H/2, W/2]. Throws ShapeMismatch for odd H, W.
template <typename T>
Tensor<T> afr_forward(const Tensor<T>& anchor, const AfrWeights<T>& w);

/// Applies afr_forward to every anchor independently.
template <typename T>
AnchorSet<T> refine_anchors(AnchorSet<T> set, const AfrWeights<T>& w);

// ---- video latent and tokens ------------------------------------------------

template <typename T>
struct VideoLatent {
  Tensor<T> y;
  Tensor<T> noise;
  Tensor<T> mask;
  Tensor<T> assembled;  // [3C, F', H, W] = [y; noise; mask]
};

template <typename T>
VideoLatent<T> assemble_video_latent(const Tensor<T>& y, std::uint64_t noise_seed);

struct TokenGrid {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const { return frames * height * width; }
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

template <typename T>
struct PatchTokens {
  Tensor<T> tokens;  // [F * H/p * W/p, C * p * p]
  std::vector<SpacetimeIndex> positions;
  TokenGrid grid;
};

/// Non-overlapping p x p spatial patches, tokens ordered t, then h, then w;
/// features ordered channel, then patch row, then patch column.
template <typename T>
PatchTokens<T> patchify(const Tensor<T>& v, std::size_t patch = 2);
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::size_t channels, const TokenGrid& grid, std::size_t patch = 2);

std::vector<SpacetimeIndex> grid_positions(const TokenGrid& grid);

/// [N, D] tokens in grid order <-> [D, F, H, W] feature maps.
template <typename T>
Tensor<T> tokens_to_features(const Tensor<T>& tokens, const TokenGrid& grid);
template <typename T>
Tensor<T> features_to_tokens(const Tensor<T>& features);

/// Clip index and spatial position of one anchor token.
struct AnchorTokenIndex {
  int clip = 0;
  int h = 0;
  int w = 0;
};

template <typename T>
struct AnchorTokens {
  Tensor<T> tokens;  // [L * H * W, D], undefined when there are no anchors
  std::vector<AnchorTokenIndex> positions;
};

/// One token per spatial position of each refined anchor feature [C', 1, H, W],
/// projected to the token width by proj_w [C', D] and proj_b [D]. Refined
/// features already sit on the video token grid, so no further patching.
template <typename T>
AnchorTokens<T> tokenize_anchor_features(std::span<const Tensor<T>> features, const Tensor<T>& proj_w,
                                         const Tensor<T>& proj_b);

// ---- attention ----------------------------------------------------------------

template <typename T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionWeights init(std::size_t dim, std::uint64_t seed);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    f("wq", s.wq); f("bq", s.bq); f("wk", s.wk); f("bk", s.bk);
    f("wv", s.wv); f("bv", s.bv); f("wo", s.wo); f("bo", s.bo);
  }
};

/// Temporal gap between the last video frame index and the first anchor index.
inline constexpr int kAnchorTemporalGap = 4;

/// Anchor positions t' = F' + gap + clip with spatial indices kept, where F'
/// is one past the largest video temporal index. Throws IndexOverlap if any
/// anchor index would not exceed every video index.
std::vector<SpacetimeIndex> shifted_anchor_positions(std::span<const SpacetimeIndex> video_positions,
                                                     std::span<const AnchorTokenIndex> anchors,
                                                     int gap = kAnchorTemporalGap);

/// Multi-head scaled dot-product attention with optional rotary positions on
/// queries and keys; scale is 1/sqrt(head_dim).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& queries, const Tensor<T>& keys_values, const AttentionWeights<T>& w,
                               std::size_t heads, std::span<const SpacetimeIndex> query_positions = {},
                               std::span<const SpacetimeIndex> key_positions = {});

template <typename T>
struct AttentionOutput {
  Tensor<T> video;
  Tensor<T> anchor;  // undefined when no anchor tokens were given
};

/// Joint self-attention over [video; anchor] with shifted anchor RoPE indices,
/// split back by the original counts.
template <typename T>
AttentionOutput<T> anchor_attention(const Tensor<T>& video_tokens, const Tensor<T>& anchor_tokens,
                                    std::span<const SpacetimeIndex> video_positions,
                                    std::span<const AnchorTokenIndex> anchor_positions,
                                    const AttentionWeights<T>& w, std::size_t heads);

// ---- anchor-corresponding feature modulation --------------------------------

template <typename T>
struct AcfmWeights {
  Tensor<T> anchor_w, anchor_b;  // residual depthwise conv on anchor features
  Tensor<T> gate_w, gate_b;      // depthwise conv feeding the GELU gate
  Tensor<T> out_w, out_b;        // residual depthwise conv on the merged stack

  /// Gate and output convs start at zero, so the module starts as the identity.
  static AcfmWeights init(std::size_t dim, std::uint64_t seed);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    f("anchor_w", s.anchor_w); f("anchor_b", s.anchor_b);
    f("gate_w", s.gate_w); f("gate_b", s.gate_b);
    f("out_w", s.out_w); f("out_b", s.out_b);
  }
};

/// video_feats [D, F', H, W], anchor_feats [D, L, H, W] (undefined if L = 0).
/// anchor_indices[i] is the video frame modulated by anchor i.
/// Throws ShapeMismatch, IndexOutOfRange for an index >= F' or a repeated index.
template <typename T>
Tensor<T> acfm_forward(const Tensor<T>& video_feats, const Tensor<T>& anchor_feats,
                       std::span<const int> anchor_indices, const AcfmWeights<T>& w);

// ---- DiT block ----------------------------------------------------------------

template <typename T>
struct LayerNormWeights {
  Tensor<T> gain, bias;

  static LayerNormWeights init(std::size_t dim);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    f("gain", s.gain); f("bias", s.bias);
  }
};

template <typename T>
struct FeedForwardWeights {
  Tensor<T> w1, b1, w2, b2;

  static FeedForwardWeights init(std::size_t dim, std::size_t hidden, std::uint64_t seed);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    f("w1", s.w1); f("b1", s.b1); f("w2", s.w2); f("b2", s.b2);
  }
};

enum class AcfmPlacement { AfterSelfAttention, AfterCrossAttention };

struct DiTBlockConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  AcfmPlacement acfm_placement = AcfmPlacement::AfterSelfAttention;
};

template <typename T>
struct DiTBlockWeights {
  LayerNormWeights<T> norm1;
  AttentionWeights<T> self_attn;
  AcfmWeights<T> acfm;
  LayerNormWeights<T> norm2;
  AttentionWeights<T> cross_attn;
  LayerNormWeights<T> norm3;
  FeedForwardWeights<T> ffn;

  static DiTBlockWeights init(const DiTBlockConfig& cfg, std::uint64_t seed);

  template <typename S, typename F>
  static void each(S& s, F&& f) {
    auto nest = [&f](std::string_view prefix) {
      return [&f, prefix](std::string_view name, auto& t) { f(std::string(prefix) + "." + std::string(name), t); };
    };
    LayerNormWeights<T>::each(s.norm1, nest("norm1"));
    AttentionWeights<T>::each(s.self_attn, nest("self_attn"));
    AcfmWeights<T>::each(s.acfm, nest("acfm"));
    LayerNormWeights<T>::each(s.norm2, nest("norm2"));
    AttentionWeights<T>::each(s.cross_attn, nest("cross_attn"));
    LayerNormWeights<T>::each(s.norm3, nest("norm3"));
    FeedForwardWeights<T>::each(s.ffn, nest("ffn"));
  }
};

/// Positional bookkeeping shared by every block of a forward pass.
struct BlockContext {
  std::vector<SpacetimeIndex> video_positions;
  std::vector<AnchorTokenIndex> anchor_positions;
  std::vector<int> anchor_indices;  // clip-start latent frame per anchor
  TokenGrid video_grid;
};

template <typename T>
struct BlockState {
  Tensor<T> video;   // [Nv, D]
  Tensor<T> anchor;  // [Na, D], undefined when there are no anchors
};

/// Intermediate states after each sublayer, for inspection.
template <typename T>
struct BlockTrace {
  BlockState<T> after_self_attention;
  BlockState<T> after_acfm;
  BlockState<T> after_cross_attention;
  BlockState<T> after_feed_forward;
};

/// norm -> anchor_attention -> residual -> ACFM -> norm -> cross-attention
/// (video only; skipped when text is undefined) -> residual -> norm -> FFN
/// (both streams) -> residual.
template <typename T>
BlockState<T> dit_block_forward(const BlockState<T>& in, const Tensor<T>& text_tokens, const BlockContext& ctx,
                                const DiTBlockWeights<T>& w, const DiTBlockConfig& cfg,
                                BlockTrace<T>* trace = nullptr);

// ---- weight utilities ---------------------------------------------------------

template <typename U, template <typename> class W, typename T>
W<U> cast_weights(const W<T>& src, bool requires_grad = false) {
  std::vector<const Tensor<T>*> in;
  W<T>::each(src, [&](const auto&, const Tensor<T>& t) { in.push_back(&t); });
  W<U> dst;
  std::size_t i = 0;
  W<U>::each(dst, [&](const auto&, Tensor<U>& t) { t = in[i++]->template cast<U>(requires_grad); });
  return dst;
}

template <template <typename> class W>
void append_named(NamedTensors& out, const std::string& prefix, const W<float>& w) {
  W<float>::each(w, [&](const auto& name, const Tensor32& t) { out.emplace_back(prefix + std::string(name), t); });
}

/// Fills w from tensors named prefix + field; throws InvalidConfig if one is
/// missing and ShapeMismatch if a shape differs from the current value.
template <template <typename> class W>
void assign_named(const NamedTensors& in, const std::string& prefix, W<float>& w) {
  W<float>::each(w, [&](const auto& name, Tensor32& t) {
    const std::string key = prefix + std::string(name);
    for (const auto& [n, v] : in) {
      if (n == key) {
        if (t.defined() && !(t.shape() == v.shape())) {
          throw Error(ErrorCode::ShapeMismatch, key + " has shape " + v.shape().str() + ", expected " + t.shape().str());
        }
        t = v;
        return;
      }
    }
    throw Error(ErrorCode::InvalidConfig, "checkpoint lacks " + key);
  });
}

}  // namespace stcdit
