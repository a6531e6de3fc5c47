#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "init_support.hpp"
#include "stcdit/anchor.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

template <typename T>
AttentionWeights<T> AttentionWeights<T>::init(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AttentionWeights w;
  w.wq = detail::init_weight<T>({dim, dim}, rng);
  w.wk = detail::init_weight<T>({dim, dim}, rng);
  w.wv = detail::init_weight<T>({dim, dim}, rng);
  w.wo = detail::init_weight<T>({dim, dim}, rng);
  w.bq = Tensor<T>::zeros({dim});
  w.bk = Tensor<T>::zeros({dim});
  w.bv = Tensor<T>::zeros({dim});
  w.bo = Tensor<T>::zeros({dim});
  return w;
}

std::vector<SpacetimeIndex> shifted_anchor_positions(std::span<const SpacetimeIndex> video_positions,
                                                     std::span<const AnchorTokenIndex> anchors, int gap) {
  int max_t = -1;
  for (const SpacetimeIndex& p : video_positions) max_t = std::max(max_t, p.t);
  const int base = max_t + 1 + gap;
  std::vector<SpacetimeIndex> out;
  out.reserve(anchors.size());
  for (const AnchorTokenIndex& a : anchors) {
    const SpacetimeIndex p{base + a.clip, a.h, a.w};
    if (p.t <= max_t) {
      throw Error(ErrorCode::IndexOverlap,
                  fmt::format("anchor temporal index {} does not exceed video index {}", p.t, max_t));
    }
    out.push_back(p);
  }
  return out;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& queries, const Tensor<T>& keys_values, const AttentionWeights<T>& w,
                               std::size_t heads, std::span<const SpacetimeIndex> query_positions,
                               std::span<const SpacetimeIndex> key_positions) {
  const Shape& qs = queries.shape();
  const Shape& ks = keys_values.shape();
  if (qs.rank() != 2 || ks.rank() != 2 || qs[1] != ks[1]) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("attention inputs {} and {}", qs.str(), ks.str()));
  }
  const std::size_t dim = qs[1];
  if (heads == 0 || dim % heads != 0) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("token dim {} is not divisible by {} heads", dim, heads));
  }
  const bool rotate = !query_positions.empty() || !key_positions.empty();
  const std::size_t head_dim = dim / heads;
  const std::vector<std::size_t> sizes(heads, head_dim);

  const auto q = split(linear(queries, w.wq, w.bq), 1, sizes);
  const auto k = split(linear(keys_values, w.wk, w.bk), 1, sizes);
  const auto v = split(linear(keys_values, w.wv, w.bv), 1, sizes);
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(head_dim)));

  std::vector<Tensor<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T> qh = rotate ? rope_apply(q[h], query_positions) : q[h];
    const Tensor<T> kh = rotate ? rope_apply(k[h], key_positions) : k[h];
    const Tensor<T> probs = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(probs, v[h]));
  }
  return linear(heads == 1 ? outs.front() : concat<T>(outs, 1), w.wo, w.bo);
}

template <typename T>
AttentionOutput<T> anchor_attention(const Tensor<T>& video_tokens, const Tensor<T>& anchor_tokens,
                                    std::span<const SpacetimeIndex> video_positions,
                                    std::span<const AnchorTokenIndex> anchor_positions,
                                    const AttentionWeights<T>& w, std::size_t heads) {
  const std::size_t nv = video_tokens.shape()[0];
  if (video_positions.size() != nv) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} video tokens but {} positions", nv, video_positions.size()));
  }
  AttentionOutput<T> out;
  if (!anchor_tokens.defined()) {
    if (!anchor_positions.empty()) throw Error(ErrorCode::ShapeMismatch, "anchor positions without anchor tokens");
    out.video = multi_head_attention(video_tokens, video_tokens, w, heads, video_positions, video_positions);
    return out;
  }
  const std::size_t na = anchor_tokens.shape()[0];
  if (anchor_positions.size() != na) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} anchor tokens but {} positions", na, anchor_positions.size()));
  }
  std::vector<SpacetimeIndex> positions(video_positions.begin(), video_positions.end());
  const auto shifted = shifted_anchor_positions(video_positions, anchor_positions);
  positions.insert(positions.end(), shifted.begin(), shifted.end());

  const Tensor<T> parts[2] = {video_tokens, anchor_tokens};
  const Tensor<T> joint = concat<T>(parts, 0);
  const Tensor<T> attended = multi_head_attention(joint, joint, w, heads, positions, positions);
  const std::size_t sizes[2] = {nv, na};
  auto halves = split(attended, 0, sizes);
  out.video = std::move(halves[0]);
  out.anchor = std::move(halves[1]);
  return out;
}

#define STCDIT_INSTANTIATE(T)                                                                                   \
  template struct AttentionWeights<T>;                                                                          \
  template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,    \
                                             std::size_t, std::span<const SpacetimeIndex>,                      \
                                             std::span<const SpacetimeIndex>);                                  \
  template AttentionOutput<T> anchor_attention<T>(const Tensor<T>&, const Tensor<T>&,                           \
                                                  std::span<const SpacetimeIndex>,                              \
                                                  std::span<const AnchorTokenIndex>, const AttentionWeights<T>&, \
                                                  std::size_t);
STCDIT_INSTANTIATE(float)
STCDIT_INSTANTIATE(double)
#undef STCDIT_INSTANTIATE

}  // namespace stcdit
