#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stcdit/anchor.hpp"

namespace stcdit {

struct ModelConfig {
  std::size_t latent_channels = 12;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t blocks = 2;
  std::size_t patch = 2;
  AcfmPlacement acfm_placement = AcfmPlacement::AfterSelfAttention;
  /// Attention is dense, so larger token counts are refused up front.
  std::size_t max_tokens = 4096;

  DiTBlockConfig block() const { return {dim, heads, ffn_dim, acfm_placement}; }
};

/// Untrained weights for one pseudo-denoise pass over a latent video.
template <typename T>
struct RestorationWeights {
  Tensor<T> patch_w, patch_b;    // [3C p^2, D], [D]
  AfrWeights<T> afr;             // C -> C at half resolution
  Tensor<T> anchor_w, anchor_b;  // [C, D], [D]
  std::vector<DiTBlockWeights<T>> blocks;
  Tensor<T> head_w, head_b;  // [D, C p^2], [C p^2]

  static RestorationWeights init(const ModelConfig& cfg, std::uint64_t seed);

  template <typename U>
  RestorationWeights<U> cast(bool requires_grad = false) const;
};

/// Checkpoint names: patch_w, afr.pconv1_w, block0.self_attn.wq, head_b, ...
NamedTensors to_named(const RestorationWeights<float>& w);
RestorationWeights<float> from_named(const NamedTensors& tensors, const ModelConfig& cfg);

/// y [C, F', H, W] split by seg_lengths into clips; anchors are each clip's
/// first latent frame. Returns the restored latent y + head(blocks(tokens)).
/// With use_anchors false the same pass runs with no anchor tokens and no
/// anchor modulation.
template <typename T>
Tensor<T> restoration_forward(const Tensor<T>& y, std::span<const std::size_t> seg_lengths,
                              const RestorationWeights<T>& w, const ModelConfig& cfg, std::uint64_t noise_seed,
                              bool use_anchors = true, const Tensor<T>& text_tokens = {});

}  // namespace stcdit
