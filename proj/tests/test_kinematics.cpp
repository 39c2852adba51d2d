#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "trajectotree/kinematics.hpp"
#include "trajectotree/scene.hpp"

using namespace tt;
using Catch::Approx;

namespace {

// Independent oracle: chain the two links as complex rotations.
Vec2 fk_complex(const Vec2& base, double l1, double l2, double q1, double q2) {
  const std::complex<double> i(0.0, 1.0);
  const std::complex<double> tip =
      std::complex<double>(base.x(), base.y()) + l1 * std::exp(i * q1) + l2 * std::exp(i * (q1 + q2));
  return Vec2(tip.real(), tip.imag());
}

}  // namespace

TEST_CASE("forward kinematics examples") {
  const Vec2 base(0.0, 0.0);
  SECTION("straight arm along +x") {
    REQUIRE((forward_kinematics(base, 0.15, 0.10, 0.0, 0.0) - Vec2(0.25, 0.0)).norm() < 1e-15);
  }
  SECTION("rotated by pi/2") {
    REQUIRE((forward_kinematics(base, 0.15, 0.10, kPi / 2.0, 0.0) - Vec2(0.0, 0.25)).norm() <
            1e-15);
  }
  SECTION("random joints match the complex-rotation oracle") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const Vec2 b(rng.uniform(-1, 1), rng.uniform(-1, 1));
      const double l1 = rng.uniform(0.05, 0.3), l2 = rng.uniform(0.05, 0.3);
      const double q1 = rng.uniform(-4, 4), q2 = rng.uniform(-4, 4);
      REQUIRE((forward_kinematics(b, l1, l2, q1, q2) - fk_complex(b, l1, l2, q1, q2)).norm() <
              1e-14);
    }
  }
}

TEST_CASE("inverse kinematics examples") {
  const Vec2 base(0.0, 0.0);
  SECTION("full extension") {
    const auto s = inverse_kinematics(base, 0.15, 0.10, Vec2(0.25, 0.0), 1, -kPi, kPi, -kPi, kPi);
    REQUIRE(s);
    REQUIRE(s->q1 == Approx(0.0).margin(1e-12));
    REQUIRE(s->q2 == Approx(0.0).margin(1e-12));
  }
  SECTION("out of reach") {
    REQUIRE_FALSE(
        inverse_kinematics(base, 0.15, 0.10, Vec2(0.26, 0.0), 1, -kPi, kPi, -kPi, kPi));
  }
  SECTION("inside the inner annulus") {
    REQUIRE_FALSE(
        inverse_kinematics(base, 0.15, 0.10, Vec2(0.02, 0.0), 1, -kPi, kPi, -kPi, kPi));
  }
  SECTION("joint limits are respected") {
    // Reachable, but only with q2 near +-2.14; forbid that range.
    REQUIRE_FALSE(
        inverse_kinematics(base, 0.15, 0.10, Vec2(0.10, 0.0), 1, -kPi, kPi, -1.0, 1.0));
  }
}

TEST_CASE("FK/IK round trip under 1e-9 for both branches") {
  Rng rng(99);
  const Vec2 base(0.05, -0.02);
  const double l1 = 0.15, l2 = 0.10;
  int tested = 0;
  while (tested < 1000) {
    const double r = rng.uniform(l1 - l2 + 1e-6, l1 + l2 - 1e-6);
    const double a = rng.uniform(-kPi, kPi);
    const Vec2 target = base + r * Vec2(std::cos(a), std::sin(a));
    for (int branch : {1, -1}) {
      const auto s = inverse_kinematics(base, l1, l2, target, branch, -kPi, kPi, -kPi, kPi);
      if (!s) continue;  // joint-limit rejection near q1 = pi is legitimate
      REQUIRE((forward_kinematics(base, l1, l2, s->q1, s->q2) - target).norm() < 1e-9);
      REQUIRE(s->q2 * branch >= -1e-12);
      ++tested;
    }
  }
}

TEST_CASE("arm jacobian matches finite differences of FK") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec2 base(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double l1 = rng.uniform(0.05, 0.3), l2 = rng.uniform(0.05, 0.3);
    const double q1 = rng.uniform(-3, 3), q2 = rng.uniform(-3, 3);
    const Eigen::Matrix2d j = arm_jacobian(l1, l2, q1, q2);
    const double h = 1e-6;
    const Vec2 d1 = (forward_kinematics(base, l1, l2, q1 + h, q2) -
                     forward_kinematics(base, l1, l2, q1 - h, q2)) /
                    (2 * h);
    const Vec2 d2 = (forward_kinematics(base, l1, l2, q1, q2 + h) -
                     forward_kinematics(base, l1, l2, q1, q2 - h)) /
                    (2 * h);
    REQUIRE((j.col(0) - d1).norm() < 1e-6 * (1.0 + d1.norm()));
    REQUIRE((j.col(1) - d2).norm() < 1e-6 * (1.0 + d2.norm()));
  }
}

TEST_CASE("default scene initial grasp is reachable with elbows clear of the object") {
  const SceneConfig scene = SceneConfig::default_scene();
  const ObjectPose pose{};
  for (int f = 0; f < kNumFingers; ++f) {
    const ContactPoint c = surface_point(scene.rect(), scene.initial_contacts[f]);
    const auto sol = scene.ik(f, scene.contact_tip_world(pose, c));
    REQUIRE(sol);
    // elbow stays outside the rectangle
    const auto e = fk_elbow(scene.finger_bases[f], scene.link_lengths[f].x(), sol->q1);
    REQUIRE(box_sdf(scene.rect(), pose.to_local(Vec2(e.x, e.y))) > 0.0);
  }
}
