#pragma once

#include <array>

namespace stcdit {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Inter-frame similarity parameters. Maps p to scale * R(theta) * p + t.
struct MotionParams {
  double tx = 0.0;
  double ty = 0.0;
  double theta = 0.0;
  double scale = 1.0;

  static MotionParams identity() { return {}; }
};

/// 2x3 map [[a, b, tx], [c, d, ty]].
struct AffineMatrix {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  static AffineMatrix identity() { return {}; }

  double determinant() const { return a * d - b * c; }
  Point2 apply(Point2 p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  /// Returns this ∘ inner, i.e. apply inner first.
  AffineMatrix after(const AffineMatrix& inner) const;
  AffineMatrix inverse() const;
};

AffineMatrix compose_similarity(const MotionParams& p);

/// Projects to the nearest similarity when the linear part is not one.
/// Throws DegenerateMotion if the recovered scale is below 1e-9.
MotionParams decompose_affine(const AffineMatrix& m);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

}  // namespace stcdit
