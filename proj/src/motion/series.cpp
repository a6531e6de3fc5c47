#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/motion.hpp"
#include "stcdit/parallel.hpp"

namespace stcdit {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace

MotionParams estimate_pair_motion(const Frame& prev, const Frame& next, const MotionConfig& config) {
  CornerParams cp = config.corners;
  cp.min_count = config.thresholds.min_track_count;
  const auto corners = detect_corners(prev, cp);
  auto pairs = track_corners(prev, next, corners, config.lk);
  const double cx = 0.5 * (prev.width() - 1);
  const double cy = 0.5 * (prev.height() - 1);
  int ok = 0;
  for (auto& p : pairs) {
    p.src.x -= cx;
    p.src.y -= cy;
    p.dst.x -= cx;
    p.dst.y -= cy;
    ok += p.status == TrackStatus::Ok;
  }
  if (ok < config.thresholds.min_track_count) {
    throw Error(ErrorCode::InsufficientMatches,
                fmt::format("{} tracked corners, {} required", ok, config.thresholds.min_track_count));
  }
  return decompose_affine(estimate_similarity(pairs, config.ransac).transform);
}

MotionSeries motion_timeseries(const FrameSequence& seq, const MotionConfig& config) {
  if (seq.size() < 2) throw Error(ErrorCode::DimensionMismatch, "motion analysis needs at least two frames");
  const std::size_t n = seq.size() - 1;
  std::vector<std::optional<MotionParams>> estimates(n);
  std::vector<std::string> failures(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    try {
      estimates[i] = estimate_pair_motion(seq[i], seq[i + 1], config);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  MotionSeries series;
  series.params.reserve(n);
  MotionParams last = MotionParams::identity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (estimates[i]) {
      last = *estimates[i];
      any = true;
    }
    series.params.push_back(last);
    series.carried.push_back(!estimates[i].has_value());
  }
  if (!any) throw Error(ErrorCode::TooFewCorners, "motion estimation failed for every frame pair: " + failures[0]);
  return series;
}

std::vector<int> detect_motion_breaks(std::span<const MotionParams> series, const Thresholds& th,
                                      double frame_diag) {
  const double tol_t = th.tau_t * frame_diag;
  std::vector<double> tx, ty, theta, log_s;
  std::vector<int> breaks;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const MotionParams& p = series[i];
    const double ls = std::log(p.scale);
    if (!tx.empty()) {
      const bool jump = std::abs(p.tx - median_of(tx)) > tol_t || std::abs(p.ty - median_of(ty)) > tol_t ||
                        std::abs(wrap_angle(p.theta - median_of(theta))) > th.tau_theta ||
                        std::abs(ls - median_of(log_s)) > th.tau_s;
      if (jump) {
        breaks.push_back(static_cast<int>(i) + 1);
        tx.clear();
        ty.clear();
        theta.clear();
        log_s.clear();
        continue;
      }
    }
    tx.push_back(p.tx);
    ty.push_back(p.ty);
    theta.push_back(p.theta);
    log_s.push_back(ls);
  }
  return breaks;
}

MotionParams median_motion(std::span<const MotionParams> series) {
  if (series.empty()) return MotionParams::identity();
  std::vector<double> tx, ty, theta, log_s;
  for (const auto& p : series) {
    tx.push_back(p.tx);
    ty.push_back(p.ty);
    theta.push_back(p.theta);
    log_s.push_back(std::log(p.scale));
  }
  return {median_of(tx), median_of(ty), median_of(theta), std::exp(median_of(log_s))};
}

namespace {

int floor_mod(int a, int m) { return ((a % m) + m) % m; }

// Nearest index congruent to `residue` modulo `stride`; ties go left.
int snap(int target, int residue, int stride) {
  const int lo = target - floor_mod(target - residue, stride);
  const int hi = lo + stride;
  return (target - lo <= hi - target) ? lo : hi;
}

}  // namespace

std::vector<ClipSpec> segment_video(int n_frames, std::span<const int> breaks,
                                    const SegmentConstraints& constraints) {
  if (n_frames < 1) throw Error(ErrorCode::InvalidBreaks, "n_frames must be >= 1");
  if (constraints.temporal_stride < 1 || constraints.min_clip_len < 1) {
    throw Error(ErrorCode::InvalidConfig, "temporal_stride and min_clip_len must be >= 1");
  }
  for (std::size_t i = 0; i < breaks.size(); ++i) {
    if (breaks[i] <= 0 || breaks[i] >= n_frames) {
      throw Error(ErrorCode::InvalidBreaks, fmt::format("break {} outside (0, {})", breaks[i], n_frames));
    }
    if (i > 0 && breaks[i] <= breaks[i - 1]) throw Error(ErrorCode::InvalidBreaks, "breaks must be strictly increasing");
  }
  const int stride = constraints.temporal_stride;
  std::vector<int> kept(breaks.begin(), breaks.end());
  std::vector<int> bounds;
  while (true) {
    bounds.assign(1, 0);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      bounds.push_back(snap(kept[j], static_cast<int>((j + 1) % stride), stride));
    }
    bounds.push_back(n_frames);
    // First clip whose span within the original frames is too short.
    std::size_t bad = bounds.size();
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
      if (bounds[k + 1] - bounds[k] < constraints.min_clip_len) {
        bad = k;
        break;
      }
    }
    if (bad == bounds.size() || kept.empty()) break;
    // Clip k spans bounds[k]..bounds[k+1]; kept[k-1] is its left boundary.
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(bad == 0 ? 0 : bad - 1));
  }

  std::vector<ClipSpec> clips;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) clips.push_back({bounds[k], bounds[k + 1] - bounds[k]});
  ClipSpec& last = clips.back();
  last.length += floor_mod(1 - last.length, stride);
  return clips;
}

int padded_length(std::span<const ClipSpec> clips) { return clips.empty() ? 0 : clips.back().end(); }

}  // namespace stcdit
