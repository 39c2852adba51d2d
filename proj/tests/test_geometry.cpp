#include <catch2/catch_amalgamated.hpp>

#include "trajectotree/geometry.hpp"
#include "trajectotree/scene.hpp"

using namespace tt;
using Catch::Approx;

namespace {

// Independent point-to-rectangle distance: exact distance to each boundary
// segment plus an inside test, no folded SDF arithmetic.
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double brute_force_rect_distance(const Rect& r, const Vec2& p) {
  const Vec2 c0(r.hx, -r.hy), c1(r.hx, r.hy), c2(-r.hx, r.hy), c3(-r.hx, -r.hy);
  double d = point_segment_distance(p, c0, c1);
  d = std::min(d, point_segment_distance(p, c1, c2));
  d = std::min(d, point_segment_distance(p, c2, c3));
  d = std::min(d, point_segment_distance(p, c3, c0));
  const bool inside = std::abs(p.x()) <= r.hx && std::abs(p.y()) <= r.hy;
  return inside ? -d : d;
}

// Walk the perimeter polyline corner to corner, independently of the face
// bookkeeping in surface_point.
Vec2 polyline_walk(const Rect& r, double s) {
  const Vec2 corners[4] = {{r.hx, -r.hy}, {r.hx, r.hy}, {-r.hx, r.hy}, {-r.hx, -r.hy}};
  s = std::fmod(s, r.perimeter());
  if (s < 0.0) s += r.perimeter();
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = corners[i], b = corners[(i + 1) % 4];
    const double len = (b - a).norm();
    if (s <= len) return a + (s / len) * (b - a);
    s -= len;
  }
  return corners[0];
}

const Rect kRect{0.10, 0.05};

}  // namespace

TEST_CASE("surface_point covers the perimeter with consistent frames") {
  REQUIRE(kRect.perimeter() == Approx(0.6));
  Rng rng(42);
  for (int i = 0; i < 2000; ++i) {
    const double s = rng.uniform(-2.0, 2.0);
    const ContactPoint c = surface_point(kRect, s);
    REQUIRE(c.normal.norm() == Approx(1.0));
    REQUIRE(c.tangent.norm() == Approx(1.0));
    REQUIRE(std::abs(c.normal.dot(c.tangent)) < 1e-14);
    // normal points into the rectangle
    const Vec2 probe = c.local_pos + 1e-6 * c.normal;
    REQUIRE(box_sdf(kRect, probe) < 0.0);
    // position matches the independent polyline walk
    REQUIRE((c.local_pos - polyline_walk(kRect, s)).norm() < 1e-12);
    // boundary points have zero signed distance
    REQUIRE(std::abs(box_sdf(kRect, c.local_pos)) < 1e-12);
  }
}

TEST_CASE("displace_contact wraps and rejects corners") {
  const ContactPoint c = surface_point(kRect, 0.15);

  SECTION("zero displacement is the identity") {
    const auto d = displace_contact(kRect, c, 0.0, 0.01);
    REQUIRE(d);
    REQUIRE(d->s == Approx(c.s));
    REQUIRE(d->face == c.face);
  }
  SECTION("full perimeter wraps to the identity") {
    const auto d = displace_contact(kRect, c, kRect.perimeter(), 0.01);
    REQUIRE(d);
    REQUIRE(d->s == Approx(c.s));
  }
  SECTION("crossing a corner lands on the adjacent face") {
    // 0.15 is on the +y face; walking backwards 0.08 crosses s = 0.1 onto +x.
    const auto d = displace_contact(kRect, c, -0.08, 0.01);
    REQUIRE(d);
    REQUIRE(d->face == 0);
    REQUIRE((d->local_pos - polyline_walk(kRect, 0.07)).norm() < 1e-12);
  }
  SECTION("landing inside the corner margin is rejected") {
    REQUIRE_FALSE(displace_contact(kRect, c, -0.045, 0.01));  // s = 0.105, corner at 0.1
    REQUIRE(displace_contact(kRect, c, -0.039, 0.01));        // s = 0.111, outside the margin
  }
}

TEST_CASE("signed_distance matches examples and the brute-force oracle") {
  const ObjectPose pose{};  // identity

  SECTION("far point on the +x axis") {
    REQUIRE(signed_distance(kRect, pose, Vec2(0.5, 0.0), 0.0) == Approx(0.4));
  }
  SECTION("point exactly on a face") {
    REQUIRE(signed_distance(kRect, pose, Vec2(0.10, 0.01), 0.0) == Approx(0.0).margin(1e-15));
  }
  SECTION("tip radius shifts the zero level") {
    REQUIRE(signed_distance(kRect, pose, Vec2(0.12, 0.0), 0.01) == Approx(0.01));
  }
  SECTION("random poses and tips agree with the oracle") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
      const ObjectPose p{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                         rng.uniform(-6.0, 6.0)};
      const Vec2 tip(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
      const double expect = brute_force_rect_distance(kRect, p.to_local(tip));
      REQUIRE(signed_distance(kRect, p, tip, 0.0) == Approx(expect).margin(1e-9));
    }
  }
  SECTION("continuity under small steps") {
    Rng rng(11);
    for (int i = 0; i < 5000; ++i) {
      const Vec2 tip(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
      const Vec2 step = 1e-6 * Vec2(rng.normal(), rng.normal()).normalized();
      const double a = signed_distance(kRect, pose, tip, 0.01);
      const double b = signed_distance(kRect, pose, tip + step, 0.01);
      REQUIRE(std::abs(a - b) <= step.norm() * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("contact_geom agrees with the perimeter parametrization on faces") {
  const SceneConfig scene = SceneConfig::default_scene();
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    double s = rng.uniform(0.0, kRect.perimeter());
    if (!corner_safe(kRect, s, 0.011)) continue;
    const ContactPoint c = surface_point(kRect, s);
    const ObjectPose pose{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-3.0, 3.0)};
    const Vec2 tip = scene.contact_tip_world(pose, c);

    const auto g = contact_geom(kRect, V2<double>{pose.x, pose.y}, pose.theta,
                                V2<double>{tip.x(), tip.y()}, scene.fingertip_radius);
    REQUIRE(g.face == c.face);
    REQUIRE(g.phi == Approx(0.0).margin(1e-12));
    const Vec2 n_w = rotate(pose.theta, c.normal), t_w = rotate(pose.theta, c.tangent);
    REQUIRE(g.normal_w.x == Approx(n_w.x()).margin(1e-12));
    REQUIRE(g.normal_w.y == Approx(n_w.y()).margin(1e-12));
    REQUIRE(g.tangent_w.x == Approx(t_w.x()).margin(1e-12));
    REQUIRE(g.tangent_w.y == Approx(t_w.y()).margin(1e-12));
    REQUIRE(g.point_w.x == Approx(tip.x()).margin(1e-12));
    REQUIRE(g.point_w.y == Approx(tip.y()).margin(1e-12));
  }
}

TEST_CASE("scene config round-trips through the key/value file") {
  SceneConfig s = SceneConfig::default_scene();
  s.friction_mu = 0.8;
  s.initial_contacts = {0.24, 0.16, 0.44, 0.56};
  const std::string path = "scene_roundtrip.cfg";
  s.save(path);
  const SceneConfig t = SceneConfig::load(path);
  REQUIRE(t.friction_mu == s.friction_mu);
  REQUIRE(t.object_mass == s.object_mass);
  REQUIRE(t.initial_contacts == s.initial_contacts);
  REQUIRE(t.finger_bases[2] == s.finger_bases[2]);
  std::remove(path.c_str());
}

TEST_CASE("scene invariants are enforced") {
  SceneConfig s = SceneConfig::default_scene();
  REQUIRE_NOTHROW(s.validate());
  s.friction_mu = 0.0;
  REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
  s = SceneConfig::default_scene();
  s.joint_lower[3] = s.joint_upper[3];
  REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
}
