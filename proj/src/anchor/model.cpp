#include "stcdit/model.hpp"

#include <numeric>

#include <fmt/format.h>

#include "init_support.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

template <typename T>
RestorationWeights<T> RestorationWeights<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t c = cfg.latent_channels;
  const std::size_t pp = cfg.patch * cfg.patch;
  std::mt19937_64 rng(seed);
  RestorationWeights w;
  w.patch_w = detail::init_weight<T>({3 * c * pp, cfg.dim}, rng);
  w.patch_b = Tensor<T>::zeros({cfg.dim});
  w.anchor_w = detail::init_weight<T>({c, cfg.dim}, rng);
  w.anchor_b = Tensor<T>::zeros({cfg.dim});
  w.head_w = detail::init_weight<T>({cfg.dim, c * pp}, rng);
  w.head_b = Tensor<T>::zeros({c * pp});
  w.afr = AfrWeights<T>::init(c, c, seed ^ 0xAF0AF0AF0ULL);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    w.blocks.push_back(DiTBlockWeights<T>::init(cfg.block(), seed + 1000 * (b + 1)));
  }
  return w;
}

template <typename T>
template <typename U>
RestorationWeights<U> RestorationWeights<T>::cast(bool requires_grad) const {
  RestorationWeights<U> out;
  out.patch_w = patch_w.template cast<U>(requires_grad);
  out.patch_b = patch_b.template cast<U>(requires_grad);
  out.afr = cast_weights<U>(afr, requires_grad);
  out.anchor_w = anchor_w.template cast<U>(requires_grad);
  out.anchor_b = anchor_b.template cast<U>(requires_grad);
  for (const auto& b : blocks) out.blocks.push_back(cast_weights<U>(b, requires_grad));
  out.head_w = head_w.template cast<U>(requires_grad);
  out.head_b = head_b.template cast<U>(requires_grad);
  return out;
}

NamedTensors to_named(const RestorationWeights<float>& w) {
  NamedTensors out;
  out.emplace_back("patch_w", w.patch_w);
  out.emplace_back("patch_b", w.patch_b);
  append_named(out, "afr.", w.afr);
  out.emplace_back("anchor_w", w.anchor_w);
  out.emplace_back("anchor_b", w.anchor_b);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) append_named(out, fmt::format("block{}.", b), w.blocks[b]);
  out.emplace_back("head_w", w.head_w);
  out.emplace_back("head_b", w.head_b);
  return out;
}

RestorationWeights<float> from_named(const NamedTensors& tensors, const ModelConfig& cfg) {
  // Start from a correctly shaped set so every name and shape gets checked.
  RestorationWeights<float> w = RestorationWeights<float>::init(cfg, 0);
  auto assign = [&](const std::string& name, Tensor32& t) {
    for (const auto& [n, v] : tensors) {
      if (n != name) continue;
      if (!(v.shape() == t.shape())) {
        throw Error(ErrorCode::ShapeMismatch, name + " has shape " + v.shape().str() + ", expected " + t.shape().str());
      }
      t = v;
      return;
    }
    throw Error(ErrorCode::InvalidConfig, "checkpoint lacks " + name);
  };
  assign("patch_w", w.patch_w);
  assign("patch_b", w.patch_b);
  assign_named(tensors, "afr.", w.afr);
  assign("anchor_w", w.anchor_w);
  assign("anchor_b", w.anchor_b);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) assign_named(tensors, fmt::format("block{}.", b), w.blocks[b]);
  assign("head_w", w.head_w);
  assign("head_b", w.head_b);
  return w;
}

template <typename T>
Tensor<T> restoration_forward(const Tensor<T>& y, std::span<const std::size_t> seg_lengths,
                              const RestorationWeights<T>& w, const ModelConfig& cfg, std::uint64_t noise_seed,
                              bool use_anchors, const Tensor<T>& text_tokens) {
  const Shape& s = y.shape();
  if (s.rank() != 4 || s[0] != cfg.latent_channels) {
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("latent {} for {} latent channels", s.str(), cfg.latent_channels));
  }
  if (w.blocks.size() != cfg.blocks) throw Error(ErrorCode::ShapeMismatch, "block weights do not match config");
  const std::size_t total = std::accumulate(seg_lengths.begin(), seg_lengths.end(), std::size_t{0});
  if (seg_lengths.empty() || total != s[1]) {
    throw Error(ErrorCode::SegMapMismatch, fmt::format("segment lengths sum to {} for {} latent frames", total, s[1]));
  }

  const VideoLatent<T> latent = assemble_video_latent(y, noise_seed);
  const PatchTokens<T> patches = patchify(latent.assembled, cfg.patch);
  BlockContext ctx;
  ctx.video_grid = patches.grid;
  ctx.video_positions = patches.positions;

  BlockState<T> state;
  state.video = linear(patches.tokens, w.patch_w, w.patch_b);
  std::size_t token_count = patches.grid.count();
  if (use_anchors) {
    const auto clips = seg_lengths.size() == 1 ? std::vector<Tensor<T>>{y} : split(y, 1, seg_lengths);
    AnchorSet<T> anchors = refine_anchors(select_anchor_latents<T>(clips), w.afr);
    const Shape& fs = anchors.features.front().shape();
    if (fs[2] != patches.grid.height || fs[3] != patches.grid.width) {
      throw Error(ErrorCode::ShapeMismatch, "refined anchors do not match the video token grid");
    }
    AnchorTokens<T> tokens = tokenize_anchor_features<T>(anchors.features, w.anchor_w, w.anchor_b);
    state.anchor = tokens.tokens;
    ctx.anchor_positions = std::move(tokens.positions);
    ctx.anchor_indices = anchors.clip_start_latent_index;
    token_count += ctx.anchor_positions.size();
  }
  if (token_count > cfg.max_tokens) {
    throw Error(ErrorCode::InvalidConfig,
                fmt::format("{} tokens exceed the dense-attention limit of {}", token_count, cfg.max_tokens));
  }

  for (const DiTBlockWeights<T>& block : w.blocks) {
    state = dit_block_forward(state, text_tokens, ctx, block, cfg.block());
  }
  const Tensor<T> delta =
      unpatchify(linear(state.video, w.head_w, w.head_b), cfg.latent_channels, patches.grid, cfg.patch);
  return add(y, delta);
}

template struct RestorationWeights<float>;
template struct RestorationWeights<double>;
template RestorationWeights<double> RestorationWeights<float>::cast<double>(bool) const;
template RestorationWeights<float> RestorationWeights<double>::cast<float>(bool) const;
template Tensor<float> restoration_forward<float>(const Tensor<float>&, std::span<const std::size_t>,
                                                  const RestorationWeights<float>&, const ModelConfig&,
                                                  std::uint64_t, bool, const Tensor<float>&);
template Tensor<double> restoration_forward<double>(const Tensor<double>&, std::span<const std::size_t>,
                                                    const RestorationWeights<double>&, const ModelConfig&,
                                                    std::uint64_t, bool, const Tensor<double>&);

}  // namespace stcdit
