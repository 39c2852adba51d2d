#pragma once

#include <algorithm>
#include <optional>

#include "trajectotree/core.hpp"
#include "trajectotree/dual.hpp"

namespace tt {

// Planar pose of the manipulated object. theta is kept unwrapped so that
// interpolated trajectories and tracking errors stay continuous across +-pi.
struct ObjectPose {
  double x = 0.0, y = 0.0, theta = 0.0;

  Vec3 vec() const { return Vec3(x, y, theta); }
  static ObjectPose from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }
  Vec2 position() const { return Vec2(x, y); }

  Vec2 to_world(const Vec2& local) const { return position() + rotate(theta, local); }
  Vec2 to_local(const Vec2& world) const { return rotate(-theta, world - position()); }
};

struct ObjectTwist {
  double vx = 0.0, vy = 0.0, omega = 0.0;

  Vec3 vec() const { return Vec3(vx, vy, omega); }
  static ObjectTwist from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }
};

// Axis-aligned rectangle in its own body frame, centered at the origin.
struct Rect {
  double hx = 0.0, hy = 0.0;  // half extents

  double perimeter() const { return 4.0 * (hx + hy); }

  // Cumulative arc length of the face start corners, walking counterclockwise
  // from (hx, -hy): +x face, +y face, -x face, -y face.
  std::array<double, 5> face_starts() const {
    return {0.0, 2.0 * hy, 2.0 * hy + 2.0 * hx, 4.0 * hy + 2.0 * hx, perimeter()};
  }
};

// A point on the rectangle perimeter. normal points into the rectangle,
// tangent points along increasing arc length; both are body-frame units.
struct ContactPoint {
  double s = 0.0;
  int face = 0;
  Vec2 local_pos = Vec2::Zero();
  Vec2 normal = Vec2::Zero();
  Vec2 tangent = Vec2::Zero();
};

inline double wrap_arclength(const Rect& r, double s) {
  const double p = r.perimeter();
  s = std::fmod(s, p);
  if (s < 0.0) s += p;
  return s;
}

inline ContactPoint surface_point(const Rect& r, double s) {
  ContactPoint c;
  c.s = wrap_arclength(r, s);
  const auto cs = r.face_starts();
  double u = c.s;
  if (u < cs[1]) {
    c.face = 0;  // +x face, walking from (hx,-hy) to (hx,hy)
    c.local_pos = Vec2(r.hx, -r.hy + u);
    c.normal = Vec2(-1.0, 0.0);
    c.tangent = Vec2(0.0, 1.0);
  } else if (u < cs[2]) {
    c.face = 1;  // +y face
    c.local_pos = Vec2(r.hx - (u - cs[1]), r.hy);
    c.normal = Vec2(0.0, -1.0);
    c.tangent = Vec2(-1.0, 0.0);
  } else if (u < cs[3]) {
    c.face = 2;  // -x face
    c.local_pos = Vec2(-r.hx, r.hy - (u - cs[2]));
    c.normal = Vec2(1.0, 0.0);
    c.tangent = Vec2(0.0, -1.0);
  } else {
    c.face = 3;  // -y face
    c.local_pos = Vec2(-r.hx + (u - cs[3]), -r.hy);
    c.normal = Vec2(0.0, 1.0);
    c.tangent = Vec2(1.0, 0.0);
  }
  return c;
}

// Arc-length distance to the nearest rectangle corner.
inline double corner_distance(const Rect& r, double s) {
  s = wrap_arclength(r, s);
  const double p = r.perimeter();
  double best = p;
  for (double c : r.face_starts()) {
    double d = std::abs(s - c);
    best = std::min(best, std::min(d, p - d));
  }
  return best;
}

inline bool corner_safe(const Rect& r, double s, double margin) {
  return corner_distance(r, s) >= margin;
}

// Walk d meters along the perimeter; rejects landings inside a corner margin.
inline std::optional<ContactPoint> displace_contact(const Rect& r, const ContactPoint& c,
                                                    double d, double corner_margin) {
  const double s = wrap_arclength(r, c.s + d);
  if (!corner_safe(r, s, corner_margin)) return std::nullopt;
  return surface_point(r, s);
}

// Signed distance from a body-frame point to the rectangle boundary:
// positive outside, negative inside. Smooth outside except at corner points.
template <class T>
T box_sdf(const Rect& r, const V2<T>& p) {
  using std::abs;
  using std::max;
  using std::min;
  using std::sqrt;
  const T dx = abs(p.x) - T(r.hx);
  const T dy = abs(p.y) - T(r.hy);
  if (value_of(dx) <= 0.0 && value_of(dy) <= 0.0) return max(dx, dy);
  const T ox = max(dx, T(0.0)), oy = max(dy, T(0.0));
  return sqrt(ox * ox + oy * oy);
}

inline double box_sdf(const Rect& r, const Vec2& p) {
  return box_sdf(r, V2<double>{p.x(), p.y()});
}

// Distance from the fingertip sphere surface to the object in world frame.
inline double signed_distance(const Rect& r, const ObjectPose& pose, const Vec2& tip_world,
                              double tip_radius) {
  const Vec2 p = pose.to_local(tip_world);
  return box_sdf(r, p) - tip_radius;
}

inline double clamp_scalar(double v, double lo, double hi) {
  return std::clamp(v, lo, hi);
}
template <int N>
Dual<N> clamp_scalar(const Dual<N>& v, double lo, double hi) {
  return clamp(v, lo, hi);
}

// Contact geometry of a fingertip sphere against the posed rectangle:
// gap, world-frame inward normal / tangent of the nearest face, and the
// world-frame contact point (the tip-center location at touch). Faces are
// selected by the nearest-feature rule, so all quantities are piecewise
// smooth in (pose, tip).
template <class T>
struct ContactGeom {
  T phi{};             // gap between tip sphere and rectangle
  V2<T> normal_w{};    // inward face normal, world frame
  V2<T> tangent_w{};   // face tangent (increasing arc length), world frame
  V2<T> point_w{};     // contact point = surface point + radius * outward
  int face = 0;
};

template <class T>
ContactGeom<T> contact_geom(const Rect& r, const V2<T>& center, const T& theta,
                            const V2<T>& tip_w, double tip_radius) {
  using std::abs;
  using std::max;
  ContactGeom<T> g;
  const V2<T> p = rotate(-theta, tip_w - center);  // body frame
  const T dx = abs(p.x) - T(r.hx);
  const T dy = abs(p.y) - T(r.hy);
  g.phi = box_sdf(r, p) - T(tip_radius);

  V2<T> n_in, tan, cp;
  if (value_of(dx) >= value_of(dy)) {
    const double sx = value_of(p.x) >= 0.0 ? 1.0 : -1.0;
    n_in = {T(-sx), T(0.0)};
    tan = {T(0.0), T(sx)};
    cp = {T(sx * (r.hx + tip_radius)), clamp_scalar(p.y, -r.hy, r.hy)};
    g.face = sx > 0.0 ? 0 : 2;
  } else {
    const double sy = value_of(p.y) >= 0.0 ? 1.0 : -1.0;
    n_in = {T(0.0), T(-sy)};
    tan = {T(-sy), T(0.0)};
    cp = {clamp_scalar(p.x, -r.hx, r.hx), T(sy * (r.hy + tip_radius))};
    g.face = sy > 0.0 ? 1 : 3;
  }
  g.normal_w = rotate(theta, n_in);
  g.tangent_w = rotate(theta, tan);
  g.point_w = center + rotate(theta, cp);
  return g;
}

}  // namespace tt
