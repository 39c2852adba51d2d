#pragma once

#include <array>
#include <optional>

#include "trajectotree/core.hpp"
#include "trajectotree/dual.hpp"

namespace tt {

// Two-link planar arm. Joint 0 rotates about the base, joint 1 about the
// elbow; angles are absolute-relative as usual (q1 measured from +x, q2
// relative to the first link).

template <class T>
V2<T> fk_elbow(const Vec2& base, double l1, const T& q1) {
  using std::cos;
  using std::sin;
  return {T(base.x()) + l1 * cos(q1), T(base.y()) + l1 * sin(q1)};
}

template <class T>
V2<T> fk_tip(const Vec2& base, double l1, double l2, const T& q1, const T& q2) {
  using std::cos;
  using std::sin;
  const T a = q1 + q2;
  return {T(base.x()) + l1 * cos(q1) + l2 * cos(a),
          T(base.y()) + l1 * sin(q1) + l2 * sin(a)};
}

inline Vec2 forward_kinematics(const Vec2& base, double l1, double l2, double q1, double q2) {
  const auto p = fk_tip(base, l1, l2, q1, q2);
  return Vec2(p.x, p.y);
}

// Tip velocity for given joint rates; the same expression doubles as the
// analytic Jacobian-vector product d(tip)/dq * qdot.
template <class T>
V2<T> fk_tip_velocity(double l1, double l2, const T& q1, const T& q2, const T& qd1,
                      const T& qd2) {
  using std::cos;
  using std::sin;
  const T a = q1 + q2;
  const T w = qd1 + qd2;
  return {-l1 * sin(q1) * qd1 - l2 * sin(a) * w, l1 * cos(q1) * qd1 + l2 * cos(a) * w};
}

inline Eigen::Matrix2d arm_jacobian(double l1, double l2, double q1, double q2) {
  const double s1 = std::sin(q1), c1 = std::cos(q1);
  const double s12 = std::sin(q1 + q2), c12 = std::cos(q1 + q2);
  Eigen::Matrix2d j;
  j << -l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12;
  return j;
}

struct IkSolution {
  double q1 = 0.0, q2 = 0.0;
};

// Closed-form inverse kinematics. elbow_sign picks the branch (+1: q2 >= 0).
// Returns nullopt when the target is outside the reach annulus or the joint
// limits are violated.
inline std::optional<IkSolution> inverse_kinematics(const Vec2& base, double l1, double l2,
                                                    const Vec2& target, int elbow_sign,
                                                    double q1_lo, double q1_hi, double q2_lo,
                                                    double q2_hi) {
  const Vec2 dvec = target - base;
  const double r2 = dvec.squaredNorm();
  const double r = std::sqrt(r2);
  const double rmin = std::abs(l1 - l2), rmax = l1 + l2;
  const double tol = 1e-12 * (1.0 + rmax);
  if (r < rmin - tol || r > rmax + tol) return std::nullopt;

  double c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  c2 = std::clamp(c2, -1.0, 1.0);
  const double q2 = (elbow_sign >= 0 ? 1.0 : -1.0) * std::acos(c2);
  const double q1 =
      wrap_angle(std::atan2(dvec.y(), dvec.x()) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2)));

  const double slack = 1e-9;
  if (q1 < q1_lo - slack || q1 > q1_hi + slack) return std::nullopt;
  if (q2 < q2_lo - slack || q2 > q2_hi + slack) return std::nullopt;
  return IkSolution{q1, q2};
}

}  // namespace tt
