#include "stcdit/geometry.hpp"

#include <cmath>
#include <numbers>

#include "stcdit/error.hpp"

namespace stcdit {

AffineMatrix AffineMatrix::after(const AffineMatrix& inner) const {
  AffineMatrix r;
  r.a = a * inner.a + b * inner.c;
  r.b = a * inner.b + b * inner.d;
  r.c = c * inner.a + d * inner.c;
  r.d = c * inner.b + d * inner.d;
  r.tx = a * inner.tx + b * inner.ty + tx;
  r.ty = c * inner.tx + d * inner.ty + ty;
  return r;
}

AffineMatrix AffineMatrix::inverse() const {
  const double det = determinant();
  if (det == 0.0) throw Error(ErrorCode::DegenerateMotion, "singular affine matrix");
  AffineMatrix r;
  r.a = d / det;
  r.b = -b / det;
  r.c = -c / det;
  r.d = a / det;
  r.tx = -(r.a * tx + r.b * ty);
  r.ty = -(r.c * tx + r.d * ty);
  return r;
}

AffineMatrix compose_similarity(const MotionParams& p) {
  const double ca = p.scale * std::cos(p.theta);
  const double sa = p.scale * std::sin(p.theta);
  return {ca, -sa, sa, ca, p.tx, p.ty};
}

double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  if (theta > -pi && theta <= pi) return theta;
  double r = std::remainder(theta, 2.0 * pi);
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

MotionParams decompose_affine(const AffineMatrix& m) {
  double a = m.a;
  double c = m.c;
  const double norm = std::max(std::hypot(m.a, m.c), std::hypot(m.b, m.d));
  if (norm > 0.0 && (std::abs(m.a - m.d) / norm > 1e-6 || std::abs(m.b + m.c) / norm > 1e-6)) {
    a = 0.5 * (m.a + m.d);
    c = 0.5 * (m.c - m.b);
  }
  MotionParams p;
  p.scale = std::hypot(a, c);
  if (!(p.scale >= 1e-9)) throw Error(ErrorCode::DegenerateMotion, "scale below 1e-9");
  p.theta = std::atan2(c, a);
  if (p.theta == -std::numbers::pi) p.theta = std::numbers::pi;
  p.tx = m.tx;
  p.ty = m.ty;
  return p;
}

}  // namespace stcdit
