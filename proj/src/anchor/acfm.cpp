#include <vector>

#include <fmt/format.h>

#include "init_support.hpp"
#include "stcdit/anchor.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

template <typename T>
AcfmWeights<T> AcfmWeights<T>::init(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AcfmWeights w;
  w.anchor_w = detail::init_weight<T>({dim, 3, 3}, rng);
  w.anchor_b = Tensor<T>::zeros({dim});
  w.gate_w = Tensor<T>::zeros({dim, 3, 3});
  w.gate_b = Tensor<T>::zeros({dim});
  w.out_w = Tensor<T>::zeros({dim, 3, 3});
  w.out_b = Tensor<T>::zeros({dim});
  return w;
}

template <typename T>
Tensor<T> acfm_forward(const Tensor<T>& video_feats, const Tensor<T>& anchor_feats,
                       std::span<const int> anchor_indices, const AcfmWeights<T>& w) {
  const Shape& vs = video_feats.shape();
  if (vs.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "video features must be [D, F, H, W], got " + vs.str());
  const std::size_t frames = vs[1];
  const std::size_t anchors = anchor_feats.defined() ? anchor_feats.shape()[1] : 0;
  if (anchor_indices.size() != anchors) {
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("{} anchor indices for {} anchor feature frames", anchor_indices.size(), anchors));
  }

  std::vector<Tensor<T>> stack;
  if (frames == 1) {
    stack.push_back(video_feats);
  } else {
    const std::vector<std::size_t> ones(frames, 1);
    stack = split(video_feats, 1, ones);
  }

  if (anchors > 0) {
    const Shape& as = anchor_feats.shape();
    if (as.rank() != 4 || as[0] != vs[0] || as[2] != vs[2] || as[3] != vs[3]) {
      throw Error(ErrorCode::ShapeMismatch, fmt::format("anchor features {} vs video features {}", as.str(), vs.str()));
    }
    std::vector<bool> used(frames, false);
    for (int idx : anchor_indices) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= frames) {
        throw Error(ErrorCode::IndexOutOfRange, fmt::format("anchor index {} outside {} frames", idx, frames));
      }
      if (used[static_cast<std::size_t>(idx)]) {
        throw Error(ErrorCode::IndexOutOfRange, fmt::format("anchor index {} repeated", idx));
      }
      used[static_cast<std::size_t>(idx)] = true;
    }
    const Tensor<T> refined = add(dconv3x3(anchor_feats, w.anchor_w, w.anchor_b), anchor_feats);
    const Tensor<T> modulation = mul(refined, gelu(dconv3x3(refined, w.gate_w, w.gate_b)));
    std::vector<Tensor<T>> per_anchor;
    if (anchors == 1) {
      per_anchor.push_back(modulation);
    } else {
      const std::vector<std::size_t> ones(anchors, 1);
      per_anchor = split(modulation, 1, ones);
    }
    for (std::size_t i = 0; i < anchors; ++i) {
      Tensor<T>& frame = stack[static_cast<std::size_t>(anchor_indices[i])];
      frame = add(frame, per_anchor[i]);
    }
  }

  const Tensor<T> merged = frames == 1 ? stack.front() : concat<T>(stack, 1);
  return add(dconv3x3(merged, w.out_w, w.out_b), merged);
}

#define STCDIT_INSTANTIATE(T)                                                                               \
  template struct AcfmWeights<T>;                                                                           \
  template Tensor<T> acfm_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const int>,             \
                                     const AcfmWeights<T>&);
STCDIT_INSTANTIATE(float)
STCDIT_INSTANTIATE(double)
#undef STCDIT_INSTANTIATE

}  // namespace stcdit
