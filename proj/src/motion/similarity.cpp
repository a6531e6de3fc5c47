#include <algorithm>
#include <bit>
#include <complex>
#include <numeric>
#include <optional>
#include <random>
#include <tuple>

#include "stcdit/error.hpp"
#include "stcdit/motion.hpp"

namespace stcdit {

namespace {

using cplx = std::complex<double>;

struct Similarity {
  cplx m{1.0, 0.0};
  cplx t{0.0, 0.0};

  cplx apply(cplx z) const { return m * z + t; }
  AffineMatrix matrix() const { return {m.real(), -m.imag(), m.imag(), m.real(), t.real(), t.imag()}; }
};

struct Correspondence {
  cplx src;
  cplx dst;
  std::size_t input_index;
};

std::optional<Similarity> fit_least_squares(const std::vector<Correspondence>& pts,
                                            const std::vector<std::size_t>& use) {
  if (use.size() < 2) return std::nullopt;
  cplx src_mean = 0.0, dst_mean = 0.0;
  for (std::size_t i : use) {
    src_mean += pts[i].src;
    dst_mean += pts[i].dst;
  }
  src_mean /= static_cast<double>(use.size());
  dst_mean /= static_cast<double>(use.size());
  cplx num = 0.0;
  double den = 0.0;
  for (std::size_t i : use) {
    const cplx ps = pts[i].src - src_mean;
    num += std::conj(ps) * (pts[i].dst - dst_mean);
    den += std::norm(ps);
  }
  if (!(den > 1e-18)) return std::nullopt;
  Similarity s;
  s.m = num / den;
  s.t = dst_mean - s.m * src_mean;
  return s;
}

std::uint64_t fnv1a(std::uint64_t h, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

AffineMatrix fit_similarity_least_squares(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.size() < 2) {
    throw Error(ErrorCode::InsufficientMatches, "least-squares similarity needs >= 2 matched points");
  }
  std::vector<Correspondence> pts;
  std::vector<std::size_t> use(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pts.push_back({{src[i].x, src[i].y}, {dst[i].x, dst[i].y}, i});
  std::iota(use.begin(), use.end(), 0);
  const auto fit = fit_least_squares(pts, use);
  if (!fit) throw Error(ErrorCode::DegenerateConfiguration, "all source points coincide");
  return fit->matrix();
}

SimilarityFit estimate_similarity(std::span<const TrackedPair> pairs, const RansacParams& params) {
  std::vector<Correspondence> pts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].status == TrackStatus::Ok) {
      pts.push_back({{pairs[i].src.x, pairs[i].src.y}, {pairs[i].dst.x, pairs[i].dst.y}, i});
    }
  }
  if (pts.size() < 2) throw Error(ErrorCode::InsufficientMatches, "fewer than two tracked pairs");

  // Canonical order, and a seed derived from the sorted data, make the draw
  // sequence independent of input order.
  auto key = [](const Correspondence& c) {
    return std::make_tuple(c.src.real(), c.src.imag(), c.dst.real(), c.dst.imag());
  };
  std::sort(pts.begin(), pts.end(), [&](const Correspondence& a, const Correspondence& b) { return key(a) < key(b); });
  std::uint64_t h = 0xCBF29CE484222325ull ^ params.seed;
  for (const auto& c : pts) {
    h = fnv1a(h, c.src.real());
    h = fnv1a(h, c.src.imag());
    h = fnv1a(h, c.dst.real());
    h = fnv1a(h, c.dst.imag());
  }
  std::mt19937_64 rng(h);

  const std::size_t n = pts.size();
  const double thr2 = params.inlier_px * params.inlier_px;
  auto consensus = [&](const Similarity& s, std::vector<std::size_t>& inl) {
    inl.clear();
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::norm(s.apply(pts[i].src) - pts[i].dst);
      if (e <= thr2) {
        inl.push_back(i);
        sse += e;
      }
    }
    return sse;
  };

  std::optional<Similarity> best;
  std::vector<std::size_t> best_inliers, scratch;
  double best_sse = 0.0;
  const int iters = n == 2 ? 1 : std::max(1, params.iters);
  for (int it = 0; it < iters; ++it) {
    std::size_t i = static_cast<std::size_t>(rng() % n);
    std::size_t j = static_cast<std::size_t>(rng() % (n - 1));
    if (j >= i) ++j;
    const cplx dp = pts[j].src - pts[i].src;
    if (std::abs(dp) < 1e-9) continue;
    Similarity s;
    s.m = (pts[j].dst - pts[i].dst) / dp;
    s.t = pts[i].dst - s.m * pts[i].src;
    const double sse = consensus(s, scratch);
    if (!best || scratch.size() > best_inliers.size() ||
        (scratch.size() == best_inliers.size() && sse < best_sse)) {
      best = s;
      best_inliers = scratch;
      best_sse = sse;
    }
  }
  if (!best) throw Error(ErrorCode::DegenerateConfiguration, "every sampled pair had coincident points");

  Similarity model = *best;
  std::vector<std::size_t> inliers = best_inliers;
  for (int round = 0; round < 3; ++round) {
    const auto refit = fit_least_squares(pts, inliers);
    if (!refit) break;
    std::vector<std::size_t> next;
    consensus(*refit, next);
    if (next.size() < 2) break;
    model = *refit;
    if (next == inliers) break;
    inliers = std::move(next);
  }
  // Final consensus reflects the returned model.
  consensus(model, inliers);

  SimilarityFit fit;
  fit.transform = model.matrix();
  fit.inliers.assign(pairs.size(), false);
  for (std::size_t i : inliers) fit.inliers[pts[i].input_index] = true;
  fit.inlier_count = static_cast<int>(inliers.size());
  return fit;
}

}  // namespace stcdit
