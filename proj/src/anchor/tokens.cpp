#include <random>

#include <fmt/format.h>

#include "stcdit/anchor.hpp"
#include "stcdit/error.hpp"

namespace stcdit {

namespace {

void require_video(const Shape& s, const char* what) {
  if (s.rank() != 4) throw Error(ErrorCode::ShapeMismatch, fmt::format("{} must be [C, F, H, W], got {}", what, s.str()));
}

// Flat source index in [C, F, H, W] for token n, feature k.
std::vector<std::size_t> patch_index_map(std::size_t channels, const TokenGrid& g, std::size_t p) {
  const std::size_t height = g.height * p;
  const std::size_t width = g.width * p;
  const std::size_t dim = channels * p * p;
  std::vector<std::size_t> map(g.count() * dim);
  std::size_t n = 0;
  for (std::size_t t = 0; t < g.frames; ++t) {
    for (std::size_t hy = 0; hy < g.height; ++hy) {
      for (std::size_t wx = 0; wx < g.width; ++wx, ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t py = 0; py < p; ++py) {
            for (std::size_t px = 0; px < p; ++px) {
              const std::size_t k = (c * p + py) * p + px;
              map[n * dim + k] = ((c * g.frames + t) * height + hy * p + py) * width + wx * p + px;
            }
          }
        }
      }
    }
  }
  return map;
}

}  // namespace

template <typename T>
VideoLatent<T> assemble_video_latent(const Tensor<T>& y, std::uint64_t noise_seed) {
  require_video(y.shape(), "video latent");
  std::mt19937_64 rng(noise_seed);
  VideoLatent<T> v;
  v.y = y;
  v.noise = randn<T>(y.shape(), rng);
  v.mask = Tensor<T>::full(y.shape(), T(1));
  const Tensor<T> parts[3] = {v.y, v.noise, v.mask};
  v.assembled = concat<T>(parts, 0);
  return v;
}

std::vector<SpacetimeIndex> grid_positions(const TokenGrid& grid) {
  std::vector<SpacetimeIndex> pos;
  pos.reserve(grid.count());
  for (std::size_t t = 0; t < grid.frames; ++t) {
    for (std::size_t h = 0; h < grid.height; ++h) {
      for (std::size_t w = 0; w < grid.width; ++w) {
        pos.push_back({static_cast<int>(t), static_cast<int>(h), static_cast<int>(w)});
      }
    }
  }
  return pos;
}

template <typename T>
PatchTokens<T> patchify(const Tensor<T>& v, std::size_t patch) {
  const Shape& s = v.shape();
  require_video(s, "patchify input");
  if (patch == 0 || s[2] % patch != 0 || s[3] % patch != 0) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("patchify: {}x{} not divisible by {}", s[2], s[3], patch));
  }
  PatchTokens<T> out;
  out.grid = {s[1], s[2] / patch, s[3] / patch};
  const std::size_t dim = s[0] * patch * patch;
  const auto map = patch_index_map(s[0], out.grid, patch);
  out.tokens = take(v, map, Shape{out.grid.count(), dim});
  out.positions = grid_positions(out.grid);
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::size_t channels, const TokenGrid& grid, std::size_t patch) {
  const Shape& s = tokens.shape();
  const std::size_t dim = channels * patch * patch;
  if (s.rank() != 2 || s[0] != grid.count() || s[1] != dim) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("unpatchify: tokens {} do not fit grid {}x{}x{} with dim {}",
                                                      s.str(), grid.frames, grid.height, grid.width, dim));
  }
  const auto map = patch_index_map(channels, grid, patch);
  std::vector<std::size_t> inverse(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) inverse[map[i]] = i;
  return take(tokens, inverse, Shape{channels, grid.frames, grid.height * patch, grid.width * patch});
}

template <typename T>
Tensor<T> tokens_to_features(const Tensor<T>& tokens, const TokenGrid& grid) {
  const Shape& s = tokens.shape();
  if (s.rank() != 2 || s[0] != grid.count()) {
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("tokens {} do not fit grid {}x{}x{}", s.str(), grid.frames, grid.height, grid.width));
  }
  return reshape(transpose(tokens), Shape{s[1], grid.frames, grid.height, grid.width});
}

template <typename T>
Tensor<T> features_to_tokens(const Tensor<T>& features) {
  const Shape& s = features.shape();
  require_video(s, "features");
  return transpose(reshape(features, Shape{s[0], s[1] * s[2] * s[3]}));
}

template <typename T>
AnchorTokens<T> tokenize_anchor_features(std::span<const Tensor<T>> features, const Tensor<T>& proj_w,
                                         const Tensor<T>& proj_b) {
  AnchorTokens<T> out;
  if (features.empty()) return out;
  const Shape& first = features.front().shape();
  require_video(first, "anchor feature");
  for (const Tensor<T>& f : features) {
    if (!(f.shape() == first) || first[1] != 1) {
      throw Error(ErrorCode::ShapeMismatch, "anchor features must all be [C', 1, H, W], got " + f.shape().str());
    }
  }
  const Tensor<T> stacked = concat(features, 1);
  out.tokens = linear(features_to_tokens(stacked), proj_w, proj_b);
  for (std::size_t clip = 0; clip < features.size(); ++clip) {
    for (std::size_t h = 0; h < first[2]; ++h) {
      for (std::size_t w = 0; w < first[3]; ++w) {
        out.positions.push_back({static_cast<int>(clip), static_cast<int>(h), static_cast<int>(w)});
      }
    }
  }
  return out;
}

#define STCDIT_INSTANTIATE(T)                                                                              \
  template VideoLatent<T> assemble_video_latent<T>(const Tensor<T>&, std::uint64_t);                       \
  template PatchTokens<T> patchify<T>(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> unpatchify<T>(const Tensor<T>&, std::size_t, const TokenGrid&, std::size_t);          \
  template Tensor<T> tokens_to_features<T>(const Tensor<T>&, const TokenGrid&);                            \
  template Tensor<T> features_to_tokens<T>(const Tensor<T>&);                                              \
  template AnchorTokens<T> tokenize_anchor_features<T>(std::span<const Tensor<T>>, const Tensor<T>&,       \
                                                       const Tensor<T>&);
STCDIT_INSTANTIATE(float)
STCDIT_INSTANTIATE(double)
#undef STCDIT_INSTANTIATE

}  // namespace stcdit
