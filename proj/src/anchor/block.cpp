#include <fmt/format.h>

#include "init_support.hpp"
#include "stcdit/anchor.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

template <typename T>
LayerNormWeights<T> LayerNormWeights<T>::init(std::size_t dim) {
  return {Tensor<T>::full({dim}, T(1)), Tensor<T>::zeros({dim})};
}

template <typename T>
FeedForwardWeights<T> FeedForwardWeights<T>::init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeedForwardWeights w;
  w.w1 = detail::init_weight<T>({dim, hidden}, rng);
  w.b1 = Tensor<T>::zeros({hidden});
  w.w2 = detail::init_weight<T>({hidden, dim}, rng);
  w.b2 = Tensor<T>::zeros({dim});
  return w;
}

template <typename T>
DiTBlockWeights<T> DiTBlockWeights<T>::init(const DiTBlockConfig& cfg, std::uint64_t seed) {
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("token dim {} is not divisible by {} heads", cfg.dim, cfg.heads));
  }
  // Independent sub-seeds so adding a sublayer never reshuffles the others.
  DiTBlockWeights w;
  w.norm1 = LayerNormWeights<T>::init(cfg.dim);
  w.self_attn = AttentionWeights<T>::init(cfg.dim, seed * 8 + 1);
  w.acfm = AcfmWeights<T>::init(cfg.dim, seed * 8 + 2);
  w.norm2 = LayerNormWeights<T>::init(cfg.dim);
  w.cross_attn = AttentionWeights<T>::init(cfg.dim, seed * 8 + 3);
  w.norm3 = LayerNormWeights<T>::init(cfg.dim);
  w.ffn = FeedForwardWeights<T>::init(cfg.dim, cfg.ffn_dim, seed * 8 + 4);
  return w;
}

namespace {

template <typename T>
Tensor<T> norm(const Tensor<T>& x, const LayerNormWeights<T>& w) {
  return layernorm_lastdim(x, w.gain, w.bias);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardWeights<T>& w) {
  return linear(gelu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

template <typename T>
Tensor<T> apply_acfm(const BlockState<T>& s, const BlockContext& ctx, const AcfmWeights<T>& w) {
  const Tensor<T> video_feats = tokens_to_features(s.video, ctx.video_grid);
  Tensor<T> anchor_feats;
  if (s.anchor.defined()) {
    const std::size_t per_anchor = ctx.video_grid.height * ctx.video_grid.width;
    const std::size_t count = s.anchor.shape()[0];
    if (count % per_anchor != 0) {
      throw Error(ErrorCode::ShapeMismatch,
                  fmt::format("{} anchor tokens do not tile a {}x{} grid", count, ctx.video_grid.height,
                              ctx.video_grid.width));
    }
    anchor_feats = tokens_to_features(s.anchor, {count / per_anchor, ctx.video_grid.height, ctx.video_grid.width});
  }
  return features_to_tokens(acfm_forward(video_feats, anchor_feats, ctx.anchor_indices, w));
}

}  // namespace

template <typename T>
BlockState<T> dit_block_forward(const BlockState<T>& in, const Tensor<T>& text_tokens, const BlockContext& ctx,
                                const DiTBlockWeights<T>& w, const DiTBlockConfig& cfg, BlockTrace<T>* trace) {
  if (in.video.shape().rank() != 2 || in.video.shape()[1] != cfg.dim) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("video tokens {} for token dim {}", in.video.shape().str(), cfg.dim));
  }
  if (in.video.shape()[0] != ctx.video_grid.count()) {
    throw Error(ErrorCode::ShapeMismatch, "video token count does not match the token grid");
  }
  if (in.anchor.defined() && !(in.anchor.shape().rank() == 2 && in.anchor.shape()[1] == cfg.dim)) {
    throw Error(ErrorCode::ShapeMismatch, "anchor tokens " + in.anchor.shape().str());
  }
  const bool has_anchors = in.anchor.defined();
  BlockState<T> s = in;

  const AttentionOutput<T> att =
      anchor_attention(norm(s.video, w.norm1), has_anchors ? norm(s.anchor, w.norm1) : Tensor<T>(),
                       ctx.video_positions, ctx.anchor_positions, w.self_attn, cfg.heads);
  s.video = add(s.video, att.video);
  if (has_anchors) s.anchor = add(s.anchor, att.anchor);
  if (trace) trace->after_self_attention = s;

  if (cfg.acfm_placement == AcfmPlacement::AfterSelfAttention) s.video = apply_acfm(s, ctx, w.acfm);
  if (trace) trace->after_acfm = s;

  // Anchor tokens never enter cross-attention.
  if (text_tokens.defined()) {
    s.video = add(s.video, multi_head_attention(norm(s.video, w.norm2), text_tokens, w.cross_attn, cfg.heads));
  }
  if (cfg.acfm_placement == AcfmPlacement::AfterCrossAttention) s.video = apply_acfm(s, ctx, w.acfm);
  if (trace) trace->after_cross_attention = s;

  s.video = add(s.video, feed_forward(norm(s.video, w.norm3), w.ffn));
  if (has_anchors) s.anchor = add(s.anchor, feed_forward(norm(s.anchor, w.norm3), w.ffn));
  if (trace) trace->after_feed_forward = s;
  return s;
}

#define STCDIT_INSTANTIATE(T)                                                                                \
  template struct LayerNormWeights<T>;                                                                       \
  template struct FeedForwardWeights<T>;                                                                     \
  template struct DiTBlockWeights<T>;                                                                        \
  template BlockState<T> dit_block_forward<T>(const BlockState<T>&, const Tensor<T>&, const BlockContext&,   \
                                              const DiTBlockWeights<T>&, const DiTBlockConfig&,              \
                                              BlockTrace<T>*);
STCDIT_INSTANTIATE(float)
STCDIT_INSTANTIATE(double)
#undef STCDIT_INSTANTIATE

}  // namespace stcdit
