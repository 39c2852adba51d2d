#pragma once

#include <span>
#include <vector>

#include "trajectotree/grasp.hpp"
#include "trajectotree/linprog.hpp"

namespace tt {

struct FormClosureResult {
  bool is_closed = false;
  double margin = 0.0;  // optimal LP margin, >= 0
  VecX certificate;     // (normal, tangential) per contact achieving the margin
};

inline constexpr double kClosureThreshold = 1e-8;

// Frictional form closure via margin maximization over friction-cone edge
// weights k:
//   max d  s.t.  sum_i k_i e_i = 0 (object wrench),  k_i >= d,
//                sum k_i <= (number of edges),  k >= 0, d >= 0.
// Each planar cone has two edges (normal +- mu * tangent, normalized). The
// grasp is closed iff the optimum exceeds a small threshold.
inline FormClosureResult form_closure(const SceneConfig& scene, const ObjectPose& pose,
                                      std::span<const ContactPoint> contacts, double mu) {
  const int m = static_cast<int>(contacts.size());
  if (m < 1) throw std::invalid_argument("form_closure: needs at least one contact");
  for (const auto& c : contacts)
    if (!corner_safe(scene.rect(), c.s, scene.corner_margin))
      throw std::invalid_argument("form_closure: contact violates the corner margin");

  const int ne = 2 * m;
  const double norm = std::sqrt(1.0 + mu * mu);
  MatX G_edges(3, ne);
  for (int i = 0; i < m; ++i) {
    const Vec2 n_w = rotate(pose.theta, contacts[i].normal);
    const Vec2 t_w = rotate(pose.theta, contacts[i].tangent);
    const Vec2 r = scene.contact_tip_world(pose, contacts[i]) - pose.position();
    for (int sgn = 0; sgn < 2; ++sgn) {
      const Vec2 e = (n_w + (sgn == 0 ? mu : -mu) * t_w) / norm;
      G_edges.col(2 * i + sgn) << e.x(), e.y(), cross2(r, e);
    }
  }

  LinearProgram lp;
  const int nv = ne + 1;  // k weights, then the margin d
  lp.c = VecX::Zero(nv);
  lp.c[ne] = -1.0;  // maximize d
  lp.A_eq = MatX::Zero(3, nv);
  lp.A_eq.leftCols(ne) = G_edges;
  lp.b_eq = VecX::Zero(3);
  lp.A_in = MatX::Zero(ne + 1, nv);
  lp.b_in = VecX::Zero(ne + 1);
  for (int i = 0; i < ne; ++i) {  // d - k_i <= 0
    lp.A_in(i, i) = -1.0;
    lp.A_in(i, ne) = 1.0;
  }
  lp.A_in.row(ne).head(ne).setOnes();  // sum k <= ne
  lp.b_in[ne] = static_cast<double>(ne);
  lp.lb = VecX::Zero(nv);
  lp.ub = VecX::Constant(nv, kLpInf);

  const LpSolution sol = lp_solve(lp);
  FormClosureResult out;
  if (sol.status != LpStatus::Optimal) return out;  // k = 0 always feasible; not expected
  out.margin = std::max(0.0, -sol.objective);
  out.is_closed = out.margin > kClosureThreshold;
  out.certificate = VecX::Zero(2 * m);
  for (int i = 0; i < m; ++i) {
    const double kp = sol.x[2 * i], km = sol.x[2 * i + 1];
    out.certificate[2 * i] = (kp + km) / norm;
    out.certificate[2 * i + 1] = mu * (kp - km) / norm;
  }
  return out;
}

// Fingers not needed to keep the remaining three contacts in form closure.
// Requires the full grasp to be closed.
inline std::vector<int> free_fingers(const SceneConfig& scene, const ObjectPose& pose,
                                     const std::array<ContactPoint, kNumFingers>& contacts,
                                     double mu) {
  if (!form_closure(scene, pose, contacts, mu).is_closed)
    throw std::invalid_argument("free_fingers: input grasp is not form closed");
  std::vector<int> out;
  for (int f = 0; f < kNumFingers; ++f) {
    std::vector<ContactPoint> rest;
    for (int g = 0; g < kNumFingers; ++g)
      if (g != f) rest.push_back(contacts[g]);
    if (form_closure(scene, pose, rest, mu).is_closed) out.push_back(f);
  }
  return out;
}

}  // namespace tt
