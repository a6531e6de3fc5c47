#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stcdit/geometry.hpp"
#include "stcdit/video_io.hpp"

namespace stcdit {

struct Corner {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;  // min eigenvalue of the structure tensor
};

struct CornerParams {
  int max_corners = 200;
  double quality_level = 0.01;
  double min_distance = 7.0;
  int block_size = 5;
  /// Below this many survivors detect_corners throws TooFewCorners.
  int min_count = 8;
};

/// Shi-Tomasi detection on a Gray8 frame (Rgb8 is converted first).
std::vector<Corner> detect_corners(const Frame& frame, const CornerParams& params = {});

/// Per-pixel min-eigenvalue response map (Sobel 3x3, block_size box window,
/// window-averaged). Exposed for oracles and diagnostics.
std::vector<double> min_eigen_response(const Frame& frame, int block_size);

enum class TrackStatus { Ok, Lost };

struct TrackedPair {
  Point2 src;
  Point2 dst;
  TrackStatus status = TrackStatus::Lost;
  double residual = 0.0;  // mean absolute intensity error over the window
};

struct LkParams {
  int window = 15;
  int pyramid_levels = 3;
  int max_iters = 20;
  /// Window-averaged min eigenvalue of the normal matrix below which a point is Lost.
  double eps = 1e-3;
  /// Per-iteration displacement update (px) that counts as converged.
  double convergence = 1e-2;
};

/// Pyramidal Lucas-Kanade. One output per input corner, in order.
std::vector<TrackedPair> track_corners(const Frame& prev, const Frame& next,
                                       std::span<const Corner> corners, const LkParams& params = {});

struct RansacParams {
  int iters = 100;
  double inlier_px = 1.5;
  std::uint64_t seed = 42;
};

struct SimilarityFit {
  AffineMatrix transform;
  /// Same order as the input pairs; Lost pairs are never inliers.
  std::vector<bool> inliers;
  int inlier_count = 0;
};

/// 4-DOF similarity by 2-point RANSAC plus least-squares refit on the
/// consensus set. Result is independent of the order of `pairs`.
SimilarityFit estimate_similarity(std::span<const TrackedPair> pairs, const RansacParams& params = {});

/// Least-squares similarity through all given correspondences.
AffineMatrix fit_similarity_least_squares(std::span<const Point2> src, std::span<const Point2> dst);

struct Thresholds {
  double tau_t = 0.02;       // fraction of frame diagonal
  double tau_theta = 0.025;  // radians
  double tau_s = 0.04;       // |log scale| deviation
  int min_track_count = 8;
};

struct MotionConfig {
  CornerParams corners;
  LkParams lk;
  RansacParams ransac;
  Thresholds thresholds;
  /// 0 means use STCDIT_THREADS or hardware concurrency.
  int threads = 0;
};

struct MotionSeries {
  /// params[i] maps frame i to frame i+1, about the frame center.
  std::vector<MotionParams> params;
  /// True where estimation failed and the previous element was carried forward.
  std::vector<bool> carried;
};

/// Per-pair motion about the frame center ((w-1)/2, (h-1)/2). Corners are
/// re-detected in every source frame. Throws TooFewCorners only when every
/// pair fails; DimensionMismatch for fewer than two frames.
MotionSeries motion_timeseries(const FrameSequence& seq, const MotionConfig& config = {});

/// Motion for one frame pair, or throws on failure.
MotionParams estimate_pair_motion(const Frame& prev, const Frame& next, const MotionConfig& config);

/// Running-median change detector. A break at i+1 is emitted when element i
/// deviates from the current segment's medians; the segment then restarts at i+1.
std::vector<int> detect_motion_breaks(std::span<const MotionParams> series, const Thresholds& th,
                                      double frame_diag);

struct ClipSpec {
  int start = 0;
  int length = 0;

  int end() const { return start + length; }
  friend bool operator==(const ClipSpec&, const ClipSpec&) = default;
};

struct SegmentConstraints {
  int temporal_stride = 4;
  int min_clip_len = 5;
};

/// Splits [0, n_frames) at the breaks. Boundary j is snapped to the nearest
/// index congruent to j modulo the stride, so every clip length is
/// 1 (mod stride); clips shorter than min_clip_len merge into their left
/// neighbour (the first clip merges right). The last clip is extended past
/// n_frames as needed, so the clips tile [0, padded_length(...)), where the
/// padded length exceeds n_frames by less than the stride.
/// Throws InvalidBreaks for unsorted or out-of-range breaks.
std::vector<ClipSpec> segment_video(int n_frames, std::span<const int> breaks,
                                    const SegmentConstraints& constraints = {});

/// Total frames covered by a clip list (its last end).
int padded_length(std::span<const ClipSpec> clips);

/// Component-wise median (tx, ty, theta, log scale) of a slice of a series.
MotionParams median_motion(std::span<const MotionParams> series);

}  // namespace stcdit
