#pragma once

#include <array>

#include "trajectotree/scene.hpp"

namespace tt {

// Hand Jacobian: maps joint rates to the four fingertip velocities expressed
// in each contact's (normal, tangential) frame. Block diagonal, one 2x2 block
// per finger; rows 2f (normal) and 2f+1 (tangential).
inline Eigen::Matrix<double, kNumForce, kNumJoints> hand_jacobian(
    const SceneConfig& scene, const ObjectPose& pose, const JointConfig& q,
    const std::array<ContactPoint, kNumFingers>& contacts) {
  Eigen::Matrix<double, kNumForce, kNumJoints> J;
  J.setZero();
  for (int f = 0; f < kNumFingers; ++f) {
    const Vec2 n_w = rotate(pose.theta, contacts[f].normal);
    const Vec2 t_w = rotate(pose.theta, contacts[f].tangent);
    const Eigen::Matrix2d ja = arm_jacobian(scene.link_lengths[f].x(), scene.link_lengths[f].y(),
                                            q.q1(f), q.q2(f));
    J.block<1, 2>(2 * f, 2 * f) = n_w.transpose() * ja;
    J.block<1, 2>(2 * f + 1, 2 * f) = t_w.transpose() * ja;
  }
  return J;
}

// Grasp matrix: maps stacked local-frame contact forces (normal, tangential
// per finger, normal positive pushing into the object) to the world-frame
// object wrench (fx, fy, torque about the center of mass).
inline Eigen::Matrix<double, kPoseDof, kNumForce> grasp_matrix(
    const SceneConfig& scene, const ObjectPose& pose,
    const std::array<ContactPoint, kNumFingers>& contacts) {
  Eigen::Matrix<double, kPoseDof, kNumForce> G;
  G.setZero();
  for (int f = 0; f < kNumFingers; ++f) {
    const Vec2 n_w = rotate(pose.theta, contacts[f].normal);
    const Vec2 t_w = rotate(pose.theta, contacts[f].tangent);
    const Vec2 r = scene.contact_tip_world(pose, contacts[f]) - pose.position();
    G(0, 2 * f) = n_w.x();
    G(1, 2 * f) = n_w.y();
    G(2, 2 * f) = cross2(r, n_w);
    G(0, 2 * f + 1) = t_w.x();
    G(1, 2 * f + 1) = t_w.y();
    G(2, 2 * f + 1) = cross2(r, t_w);
  }
  return G;
}

}  // namespace tt
