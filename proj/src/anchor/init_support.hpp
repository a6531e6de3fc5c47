#pragma once

#include <random>

#include "stcdit/tensor.hpp"

namespace stcdit::detail {

inline constexpr double kInitRange = 0.02;

template <typename T>
Tensor<T> init_weight(Shape shape, std::mt19937_64& rng) {
  return uniform<T>(std::move(shape), T(-kInitRange), T(kInitRange), rng);
}

}  // namespace stcdit::detail
