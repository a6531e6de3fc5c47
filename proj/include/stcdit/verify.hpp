#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stcdit/anchor.hpp"
#include "stcdit/tensor.hpp"

namespace stcdit::verify {

struct Check {
  std::string name;
  bool passed = false;
  /// Measured quantity (max error, runtime, gap, ...) and the bound it met.
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

std::string format_check(const Check& c);

// ---- reference implementations ----------------------------------------------
// Straight loops in double over flat row-major buffers, written independently
// of the tensor library.

std::vector<double> ref_dconv3x3(std::span<const double> x, std::size_t c, std::size_t f, std::size_t h,
                                 std::size_t w, std::span<const double> k, std::span<const double> b);
std::vector<double> ref_pconv1x1(std::span<const double> x, std::size_t cin, std::size_t n,
                                 std::span<const double> wt, std::span<const double> b, std::size_t cout);
std::vector<double> ref_tconv2x2s2(std::span<const double> x, std::size_t cin, std::size_t f, std::size_t h,
                                   std::size_t w, std::span<const double> wt, std::span<const double> b,
                                   std::size_t cout);
std::vector<double> ref_maxpool2(std::span<const double> x, std::size_t c, std::size_t f, std::size_t h,
                                 std::size_t w);

/// Rotary embedding by explicit complex rotation of each adjacent pair.
std::vector<double> ref_rope(std::span<const double> x, std::size_t tokens, std::size_t dim,
                             std::span<const SpacetimeIndex> positions);

/// Per-query loop: project, rotate, score every key, softmax, weighted sum,
/// output projection. Positions may be empty (no rotation).
std::vector<double> ref_attention(std::span<const double> queries, std::size_t nq,
                                  std::span<const double> keys_values, std::size_t nk, std::size_t dim,
                                  const AttentionWeights<double>& w, std::size_t heads,
                                  std::span<const SpacetimeIndex> query_positions,
                                  std::span<const SpacetimeIndex> key_positions);

// ---- suites -------------------------------------------------------------------

/// Finite-difference checks of every op and composed module.
std::vector<Check> gradcheck_suite(std::uint64_t seed = 1);

/// Brute-force and structural oracle checks across all modules.
std::vector<Check> oracle_suite(std::uint64_t seed = 1);

// ---- acceptance criteria --------------------------------------------------------

Check criterion_segmentation();
Check criterion_affine_round_trip();
Check criterion_lk_accuracy();
Check criterion_ransac_robustness();
Check criterion_gradients();
Check criterion_attention_equivalence();
Check criterion_rope_relative();
Check criterion_acfm_identity();
Check criterion_latent_bookkeeping();
Check criterion_ablation();

}  // namespace stcdit::verify
