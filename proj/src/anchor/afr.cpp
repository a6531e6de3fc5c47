#include <fmt/format.h>

#include "init_support.hpp"
#include "stcdit/anchor.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

template <typename T>
AnchorSet<T> select_anchor_latents(std::span<const Tensor<T>> clip_latents) {
  if (clip_latents.empty()) throw Error(ErrorCode::EmptyClipList, "no clip latents to select anchors from");
  AnchorSet<T> set;
  int offset = 0;
  for (const Tensor<T>& clip : clip_latents) {
    if (clip.shape().rank() != 4) {
      throw Error(ErrorCode::ShapeMismatch, "clip latent must be [C, f, H, W], got " + clip.shape().str());
    }
    const std::size_t f = clip.shape()[1];
    if (f == 1) {
      set.latents.push_back(clip);
    } else {
      const std::size_t sizes[2] = {1, f - 1};
      set.latents.push_back(split(clip, 1, sizes)[0]);
    }
    set.clip_start_latent_index.push_back(offset);
    offset += static_cast<int>(f);
  }
  return set;
}

AnchorSet<float> select_anchor_latents(std::span<const ClipLatent> clips) {
  std::vector<Tensor32> data;
  data.reserve(clips.size());
  for (const ClipLatent& c : clips) data.push_back(c.data);
  return select_anchor_latents<float>(std::span<const Tensor32>(data));
}

template <typename T>
AfrWeights<T> AfrWeights<T>::init(std::size_t channels, std::size_t out_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AfrWeights w;
  const std::size_t c = channels;
  w.pconv1_w = detail::init_weight<T>({c, c}, rng);
  w.pconv1_b = Tensor<T>::zeros({c});
  w.dconv1_w = detail::init_weight<T>({c, 3, 3}, rng);
  w.dconv1_b = Tensor<T>::zeros({c});
  w.tconv_w = detail::init_weight<T>({c, c, 2, 2}, rng);
  w.tconv_b = Tensor<T>::zeros({c});
  w.pconv2_w = detail::init_weight<T>({out_channels, c}, rng);
  w.pconv2_b = Tensor<T>::zeros({out_channels});
  w.dconv2_w = detail::init_weight<T>({out_channels, 3, 3}, rng);
  w.dconv2_b = Tensor<T>::zeros({out_channels});
  return w;
}

template <typename T>
Tensor<T> afr_forward(const Tensor<T>& anchor, const AfrWeights<T>& w) {
  const Shape& s = anchor.shape();
  if (s.rank() != 4 || s[1] != 1) throw Error(ErrorCode::ShapeMismatch, "anchor must be [C, 1, H, W], got " + s.str());
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("anchor spatial size {}x{} is not even", s[2], s[3]));
  }
  const Tensor<T> local = dconv3x3(pconv1x1(anchor, w.pconv1_w, w.pconv1_b), w.dconv1_w, w.dconv1_b);
  const Tensor<T> merged = add(maxpool2(local), tconv2x2s2(anchor, w.tconv_w, w.tconv_b));
  return dconv3x3(pconv1x1(silu(merged), w.pconv2_w, w.pconv2_b), w.dconv2_w, w.dconv2_b);
}

template <typename T>
AnchorSet<T> refine_anchors(AnchorSet<T> set, const AfrWeights<T>& w) {
  set.features.clear();
  set.features.reserve(set.latents.size());
  for (const Tensor<T>& a : set.latents) set.features.push_back(afr_forward(a, w));
  return set;
}

#define STCDIT_INSTANTIATE(T)                                                                  \
  template AnchorSet<T> select_anchor_latents<T>(std::span<const Tensor<T>>);                  \
  template struct AfrWeights<T>;                                                               \
  template Tensor<T> afr_forward<T>(const Tensor<T>&, const AfrWeights<T>&);                   \
  template AnchorSet<T> refine_anchors<T>(AnchorSet<T>, const AfrWeights<T>&);
STCDIT_INSTANTIATE(float)
STCDIT_INSTANTIATE(double)
#undef STCDIT_INSTANTIATE

}  // namespace stcdit
