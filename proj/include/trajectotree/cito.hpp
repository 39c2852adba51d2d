#pragma once

#include <memory>
#include <span>

#include "trajectotree/grasp.hpp"
#include "trajectotree/grasp_analysis.hpp"
#include "trajectotree/nlp.hpp"
#include "trajectotree/planner.hpp"

namespace tt {

struct CostWeights {
  Eigen::Matrix3d Q = 10.0 * Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 8, 8> R = 1e-2 * Eigen::Matrix<double, 8, 8>::Identity();
  Eigen::Matrix<double, 8, 8> L = 1e-3 * Eigen::Matrix<double, 8, 8>::Identity();
  double slack_weight = 100.0;
};

struct CitoParams {
  CostWeights weights;
  double hand_inertia = 1e-3;  // reflected inertia per joint, kg m^2
  double tau_max = 2.0;        // N m
  double lam_n_max = 20.0;     // N
};

// Per-segment contact bookkeeping carried by a plan.
struct SegmentSchedule {
  int free_finger = -1;  // -1: no contact change in this segment
  std::array<double, kNumFingers> s_begin{};
  std::array<double, kNumFingers> s_end{};
};

// Time-indexed solution of the trajectory optimization. Forces are local
// contact-frame (normal, tangential) pairs per finger.
struct TrajectoryPlan {
  double dt = 0.1;
  std::vector<Vec3> x, xd;
  std::vector<Eigen::Matrix<double, 8, 1>> q, qd, tau, lam;
  std::vector<Eigen::Matrix<double, 4, 1>> gam;
  int mhat = 0;                           // steps per segment (0: unsegmented)
  std::vector<SegmentSchedule> schedule;  // empty for unsegmented plans

  int steps() const { return static_cast<int>(x.size()) - 1; }
};

// Decision-variable layout: per knot [x(3) xd(3) q(8) qd(8) tau(8) k(8) gam(4)],
// with pinning slack pairs appended after all knots. k are friction-cone edge
// weights; lambda is an affine function of them.
struct CitoLayout {
  int M = 0;
  int num_pin_rows = 0;
  static constexpr int kPerKnot = 42;

  int x(int k, int i) const { return k * kPerKnot + i; }
  int xd(int k, int i) const { return k * kPerKnot + 3 + i; }
  int q(int k, int j) const { return k * kPerKnot + 6 + j; }
  int qd(int k, int j) const { return k * kPerKnot + 14 + j; }
  int tau(int k, int j) const { return k * kPerKnot + 22 + j; }
  int kw(int k, int f, int e) const { return k * kPerKnot + 30 + 2 * f + e; }
  int gam(int k, int f) const { return k * kPerKnot + 38 + f; }
  int knot_vars() const { return kPerKnot * (M + 1); }
  int sigma(int pin_row, int sign) const { return knot_vars() + 2 * pin_row + sign; }
  int num_vars() const { return knot_vars() + 2 * num_pin_rows; }
};

namespace detail {

struct PinSpec {
  int k = 0, f = 0;
  Vec2 local_target;  // tip-center target in the object frame
};

struct PoseCostTerm {
  int knot = 0;
  Vec3 target;
};

}  // namespace detail

// One built contact-implicit problem: the general formulation, or the
// transition-constrained formulation when pins/segments are present.
class CitoProblem {
 public:
  SceneConfig scene;
  CitoParams params;
  CitoLayout layout;
  double dt = 0.1;
  int mhat = 0;
  std::vector<SegmentSchedule> schedule;

  std::vector<detail::PoseCostTerm> pose_terms;
  std::vector<std::array<bool, kNumFingers>> comp_active;  // per knot
  std::vector<detail::PinSpec> pins;                       // 2 rows each
  std::vector<int> zero_velocity_knots;                    // enforced via bounds
  ObjectPose start_pose;
  JointConfig start_joints;

  double edge_norm() const { return std::sqrt(1.0 + scene.friction_mu * scene.friction_mu); }

  // --- row layout ------------------------------------------------------------
  int rows_pos_x() const { return 3 * layout.M; }
  int rows_pos_q() const { return 8 * layout.M; }
  int rows_vel_x() const { return 3 * layout.M; }
  int rows_vel_q() const { return 8 * layout.M; }
  int rows_pin() const { return 2 * static_cast<int>(pins.size()); }
  int num_eq() const {
    return rows_pos_x() + rows_pos_q() + rows_vel_x() + rows_vel_q() + rows_pin();
  }
  int comp_count() const {
    int c = 0;
    for (const auto& a : comp_active)
      for (bool b : a) c += b ? 1 : 0;
    return c;
  }
  int num_ineq() const { return 4 * (layout.M + 1) + 5 * comp_count(); }

  NlpProblem nlp() const;
  TrajectoryPlan extract_plan(const VecX& z) const;
  VecX pack_plan(const TrajectoryPlan& plan) const;

  // forces from edge weights
  static void lam_from_edges(double kp, double km, double mu, double norm, double& ln,
                             double& lt) {
    ln = (kp + km) / norm;
    lt = mu * (kp - km) / norm;
  }
};

// --- builders ----------------------------------------------------------------

// Gravity-balancing contact forces with an interior squeeze: a particular
// cone-edge solution of G k = (0, m g, 0) plus enough of the form-closure
// certificate to keep every normal force at lam_min.
inline Eigen::Matrix<double, 8, 1> balance_forces(const SceneConfig& scene,
                                                  const ObjectPose& pose,
                                                  const std::array<ContactPoint, 4>& contacts,
                                                  double lam_min = 0.5) {
  const double mu = scene.friction_mu;
  const double norm = std::sqrt(1.0 + mu * mu);
  MatX ge(3, 8);
  for (int f = 0; f < 4; ++f) {
    const Vec2 n_w = rotate(pose.theta, contacts[f].normal);
    const Vec2 t_w = rotate(pose.theta, contacts[f].tangent);
    const Vec2 r = scene.contact_tip_world(pose, contacts[f]) - pose.position();
    for (int sgn = 0; sgn < 2; ++sgn) {
      const Vec2 e = (n_w + (sgn == 0 ? mu : -mu) * t_w) / norm;
      ge.col(2 * f + sgn) << e.x(), e.y(), cross2(r, e);
    }
  }
  LinearProgram lp;
  lp.c = VecX::Ones(8);
  lp.A_eq = ge;
  lp.b_eq = Vec3(0.0, scene.object_mass * scene.gravity, 0.0);
  lp.A_in = MatX::Zero(0, 8);
  lp.b_in = VecX::Zero(0);
  lp.lb = VecX::Zero(8);
  lp.ub = VecX::Constant(8, kLpInf);
  const auto sol = lp_solve(lp);
  if (sol.status != LpStatus::Optimal)
    throw std::runtime_error("balance_forces: grasp cannot support the object weight");

  const auto closure = form_closure(scene, pose, contacts, mu);
  if (!closure.is_closed)
    throw std::runtime_error("balance_forces: grasp is not form closed");

  Eigen::Matrix<double, 8, 1> lam;
  for (int f = 0; f < 4; ++f) {
    double ln, lt;
    CitoProblem::lam_from_edges(sol.x[2 * f], sol.x[2 * f + 1], mu, norm, ln, lt);
    lam[2 * f] = ln;
    lam[2 * f + 1] = lt;
  }
  double scale = 0.0;
  for (int f = 0; f < 4; ++f) {
    const double cert_n = closure.certificate[2 * f];
    if (cert_n > 1e-9)
      scale = std::max(scale, (lam_min - lam[2 * f]) / cert_n);
  }
  if (scale > 0.0)
    for (int i = 0; i < 8; ++i) lam[i] += scale * closure.certificate[i];
  return lam;
}

namespace detail {

inline CitoProblem make_base(const SceneConfig& scene, const ObjectPose& start_pose,
                             const JointConfig& start_joints, int m, double dt,
                             const CitoParams& params) {
  CitoProblem p;
  p.scene = scene;
  p.params = params;
  p.dt = dt;
  p.layout.M = m;
  p.start_pose = start_pose;
  p.start_joints = start_joints;
  p.comp_active.assign(m + 1, {true, true, true, true});
  return p;
}

}  // namespace detail

// General formulation: complementarity everywhere, single goal pose in the
// running cost, start state fixed and initially stationary.
inline CitoProblem build_general_cito(const SceneConfig& scene, const ObjectPose& start_pose,
                                      const JointConfig& start_joints, const ObjectPose& goal,
                                      int m, double dt, const CitoParams& params) {
  CitoProblem p = detail::make_base(scene, start_pose, start_joints, m, dt, params);
  for (int k = 0; k <= m; ++k) p.pose_terms.push_back({k, goal.vec()});
  p.zero_velocity_knots = {0};
  return p;
}

// General formulation with segment-wise incremental goal poses (the cost used
// by the benchmark for every method). targets[n] is the pose of node n+1.
inline CitoProblem build_general_cito_with_targets(const SceneConfig& scene,
                                                   const ObjectPose& start_pose,
                                                   const JointConfig& start_joints,
                                                   const std::vector<ObjectPose>& node_poses,
                                                   int mhat, double dt,
                                                   const CitoParams& params) {
  const int n = static_cast<int>(node_poses.size());
  if (n < 2 || mhat < 2) throw std::invalid_argument("build_general_cito_with_targets: need n >= 2, mhat >= 2");
  const int m = (n - 1) * mhat;
  CitoProblem p = detail::make_base(scene, start_pose, start_joints, m, dt, params);
  for (int seg = 1; seg <= n - 1; ++seg)
    for (int k = 0; k <= mhat; ++k)
      p.pose_terms.push_back({(seg - 1) * mhat + k, node_poses[seg].vec()});
  p.zero_velocity_knots = {0};
  return p;
}

// Transition-constrained formulation: pins from the contact sequence,
// complementarity only on the free finger's interior steps, stationary
// segment boundaries, segment-wise incremental goals.
inline CitoProblem build_transition_cito(const SceneConfig& scene, const ContactSequence& seq,
                                         int mhat, double dt, const CitoParams& params) {
  const int n = static_cast<int>(seq.nodes.size());
  if (n < 2 || mhat < 2) throw std::invalid_argument("build_transition_cito: need n >= 2, mhat >= 2");
  for (const auto& node : seq.nodes) {
    if (!node.ik_ok) throw std::invalid_argument("build_transition_cito: node joints missing");
    for (int j = 0; j < kNumJoints; ++j)
      if (node.joints.angles[j] < scene.joint_lower[j] - 1e-9 ||
          node.joints.angles[j] > scene.joint_upper[j] + 1e-9)
        throw std::invalid_argument("build_transition_cito: node joints violate limits");
  }

  const int m = (n - 1) * mhat;
  CitoProblem p = detail::make_base(scene, seq.nodes.front().pose, seq.nodes.front().joints, m,
                                    dt, params);
  p.mhat = mhat;

  for (int seg = 1; seg <= n - 1; ++seg)
    for (int k = 0; k <= mhat; ++k)
      p.pose_terms.push_back({(seg - 1) * mhat + k, seq.nodes[seg].pose.vec()});

  // segment bookkeeping + contact structure
  for (int s = 0; s <= n - 2; ++s) {
    SegmentSchedule sched;
    sched.free_finger = seq.switch_schedule[s];
    for (int f = 0; f < kNumFingers; ++f) {
      sched.s_begin[f] = seq.nodes[s].contacts[f].s;
      sched.s_end[f] = seq.nodes[s + 1].contacts[f].s;
    }
    p.schedule.push_back(sched);

    const int k0 = s * mhat, k1 = (s + 1) * mhat - 1;
    for (int k = k0; k <= k1; ++k)
      for (int f = 0; f < kNumFingers; ++f) p.comp_active[k][f] = false;

    for (int f = 0; f < kNumFingers; ++f) {
      const Vec2 tgt_begin = scene.contact_tip_local(seq.nodes[s].contacts[f]);
      const Vec2 tgt_end = scene.contact_tip_local(seq.nodes[s + 1].contacts[f]);
      if (f == sched.free_finger) {
        p.pins.push_back({k0, f, tgt_begin});
        p.pins.push_back({k1, f, tgt_end});
        for (int k = k0 + 1; k <= k1 - 1; ++k) p.comp_active[k][f] = true;
      } else {
        for (int k = k0; k <= k1; ++k) p.pins.push_back({k, f, tgt_begin});
      }
    }
    p.zero_velocity_knots.push_back(k0);
    p.zero_velocity_knots.push_back(k1);
  }
  // knot M sits outside every segment; it keeps the general contact rows
  return p;
}

// --- NlpProblem assembly -----------------------------------------------------

namespace detail {

// Finger-contact quantities as a function of the 13 local variables
// [x(3) q_f(2) qd_f(2) xd(3) k_f(2) gam(1)].
template <class T>
struct FingerEval {
  T phi, vn, vt, ln, lt;
  V2<T> n_w, t_w, point_w;
};

template <class T>
FingerEval<T> eval_finger(const SceneConfig& scene, int f, const V2<T>& center, const T& theta,
                          const T& q1, const T& q2, const T& qd1, const T& qd2,
                          const V2<T>& xd, const T& omega, const T& kp, const T& km) {
  FingerEval<T> out;
  const double l1 = scene.link_lengths[f].x(), l2 = scene.link_lengths[f].y();
  const V2<T> tip = fk_tip(scene.finger_bases[f], l1, l2, q1, q2);
  const auto geom = contact_geom(scene.rect(), center, theta, tip, scene.fingertip_radius);
  out.phi = geom.phi;
  out.n_w = geom.normal_w;
  out.t_w = geom.tangent_w;
  out.point_w = geom.point_w;
  const double mu = scene.friction_mu;
  const double norm = std::sqrt(1.0 + mu * mu);
  out.ln = (kp + km) / norm;
  out.lt = mu * (kp - km) / norm;
  const V2<T> v_tip = fk_tip_velocity(l1, l2, q1, q2, qd1, qd2);
  const V2<T> r = geom.point_w - center;
  const V2<T> v_obj{xd.x - omega * r.y, xd.y + omega * r.x};
  const V2<T> v_rel = v_tip - v_obj;
  out.vn = dot(v_rel, out.n_w);
  out.vt = dot(v_rel, out.t_w);
  return out;
}

// Object acceleration (force/mass, torque/inertia) at one knot as a function
// of the 19 local variables [x(3) q(8) k(8)].
template <class T>
std::array<T, 3> eval_object_accel(const SceneConfig& scene, const V2<T>& center,
                                   const T& theta, const T* q, const T* kw) {
  const double mu = scene.friction_mu;
  const double norm = std::sqrt(1.0 + mu * mu);
  T fx(0.0), fy(0.0), tz(0.0);
  for (int f = 0; f < kNumFingers; ++f) {
    const double l1 = scene.link_lengths[f].x(), l2 = scene.link_lengths[f].y();
    const V2<T> tip = fk_tip(scene.finger_bases[f], l1, l2, q[2 * f], q[2 * f + 1]);
    const auto geom = contact_geom(scene.rect(), center, theta, tip, scene.fingertip_radius);
    const T ln = (kw[2 * f] + kw[2 * f + 1]) / norm;
    const T lt = mu * (kw[2 * f] - kw[2 * f + 1]) / norm;
    const V2<T> force{ln * geom.normal_w.x + lt * geom.tangent_w.x,
                      ln * geom.normal_w.y + lt * geom.tangent_w.y};
    const V2<T> r = geom.point_w - center;
    fx += force.x;
    fy += force.y;
    tz += cross2(r, force);
  }
  const double inv_m = 1.0 / scene.object_mass;
  const double inv_i = 1.0 / scene.object_inertia();
  return {fx * inv_m, fy * inv_m - T(scene.gravity), tz * inv_i};
}

// Joint-space contact load J^T lambda for one finger as a function of the 7
// local variables [x(3) q_f(2) k_f(2)].
template <class T>
std::array<T, 2> eval_hand_load(const SceneConfig& scene, int f, const V2<T>& center,
                                const T& theta, const T& q1, const T& q2, const T& kp,
                                const T& km) {
  using std::cos;
  using std::sin;
  const double l1 = scene.link_lengths[f].x(), l2 = scene.link_lengths[f].y();
  const double mu = scene.friction_mu;
  const double norm = std::sqrt(1.0 + mu * mu);
  const V2<T> tip = fk_tip(scene.finger_bases[f], l1, l2, q1, q2);
  const auto geom = contact_geom(scene.rect(), center, theta, tip, scene.fingertip_radius);
  const T ln = (kp + km) / norm;
  const T lt = mu * (kp - km) / norm;
  const V2<T> force{ln * geom.normal_w.x + lt * geom.tangent_w.x,
                    ln * geom.normal_w.y + lt * geom.tangent_w.y};
  const T a = q1 + q2;
  const V2<T> col1{-l1 * sin(q1) - l2 * sin(a), l1 * cos(q1) + l2 * cos(a)};
  const V2<T> col2{-l2 * sin(a), l2 * cos(a)};
  return {dot(force, col1), dot(force, col2)};
}

}  // namespace detail

inline NlpProblem CitoProblem::nlp() const {
  auto self = std::make_shared<const CitoProblem>(*this);
  const CitoLayout lay = [&] {
    CitoLayout l = layout;
    l.num_pin_rows = rows_pin();
    return l;
  }();
  const int m = lay.M;
  const double dts = dt;
  const int nv = lay.num_vars();

  NlpProblem p;
  p.num_vars = nv;

  // --- bounds ---
  const double inf = std::numeric_limits<double>::infinity();
  p.lb = VecX::Constant(nv, -inf);
  p.ub = VecX::Constant(nv, inf);
  const double k_max = params.lam_n_max * edge_norm() / 2.0;
  for (int k = 0; k <= m; ++k) {
    for (int j = 0; j < 8; ++j) {
      p.lb[lay.q(k, j)] = scene.joint_lower[j];
      p.ub[lay.q(k, j)] = scene.joint_upper[j];
      p.lb[lay.tau(k, j)] = -params.tau_max;
      p.ub[lay.tau(k, j)] = params.tau_max;
      p.lb[lay.kw(k, j / 2, j % 2)] = 0.0;
      p.ub[lay.kw(k, j / 2, j % 2)] = k_max;
    }
    for (int f = 0; f < 4; ++f) p.lb[lay.gam(k, f)] = 0.0;
  }
  for (int r = 0; r < rows_pin(); ++r) {
    p.lb[lay.sigma(r, 0)] = 0.0;
    p.lb[lay.sigma(r, 1)] = 0.0;
  }
  // boundary conditions as exact bounds
  for (int i = 0; i < 3; ++i)
    p.lb[lay.x(0, i)] = p.ub[lay.x(0, i)] = start_pose.vec()[i];
  for (int j = 0; j < 8; ++j)
    p.lb[lay.q(0, j)] = p.ub[lay.q(0, j)] = start_joints.angles[j];
  for (int b : zero_velocity_knots) {
    for (int i = 0; i < 3; ++i) p.lb[lay.xd(b, i)] = p.ub[lay.xd(b, i)] = 0.0;
    for (int j = 0; j < 8; ++j) p.lb[lay.qd(b, j)] = p.ub[lay.qd(b, j)] = 0.0;
  }

  // --- cost ---
  p.cost = [self, lay](const VecX& z) {
    double c = 0.0;
    for (const auto& term : self->pose_terms) {
      Vec3 e;
      for (int i = 0; i < 3; ++i) e[i] = z[lay.x(term.knot, i)] - term.target[i];
      c += e.dot(self->params.weights.Q * e);
    }
    const double mu = self->scene.friction_mu;
    const double norm = std::sqrt(1.0 + mu * mu);
    for (int k = 0; k <= lay.M; ++k) {
      Eigen::Matrix<double, 8, 1> tau, lam;
      for (int j = 0; j < 8; ++j) tau[j] = z[lay.tau(k, j)];
      for (int f = 0; f < 4; ++f)
        lam_from_edges(z[lay.kw(k, f, 0)], z[lay.kw(k, f, 1)], mu, norm, lam[2 * f],
                       lam[2 * f + 1]);
      c += tau.dot(self->params.weights.R * tau) + lam.dot(self->params.weights.L * lam);
      for (int f = 0; f < 4; ++f) c += self->params.weights.slack_weight * z[lay.gam(k, f)];
    }
    for (int r = 0; r < lay.num_pin_rows; ++r)
      c += self->params.weights.slack_weight * (z[lay.sigma(r, 0)] + z[lay.sigma(r, 1)]);
    return c;
  };

  p.cost_grad = [self, lay](const VecX& z, VecX& g) {
    g.setZero(lay.num_vars());
    for (const auto& term : self->pose_terms) {
      Vec3 e;
      for (int i = 0; i < 3; ++i) e[i] = z[lay.x(term.knot, i)] - term.target[i];
      const Vec3 d = 2.0 * (self->params.weights.Q * e);
      for (int i = 0; i < 3; ++i) g[lay.x(term.knot, i)] += d[i];
    }
    const double mu = self->scene.friction_mu;
    const double norm = std::sqrt(1.0 + mu * mu);
    for (int k = 0; k <= lay.M; ++k) {
      Eigen::Matrix<double, 8, 1> tau, lam;
      for (int j = 0; j < 8; ++j) tau[j] = z[lay.tau(k, j)];
      for (int f = 0; f < 4; ++f)
        lam_from_edges(z[lay.kw(k, f, 0)], z[lay.kw(k, f, 1)], mu, norm, lam[2 * f],
                       lam[2 * f + 1]);
      const Eigen::Matrix<double, 8, 1> dtau = 2.0 * (self->params.weights.R * tau);
      const Eigen::Matrix<double, 8, 1> dlam = 2.0 * (self->params.weights.L * lam);
      for (int j = 0; j < 8; ++j) g[lay.tau(k, j)] += dtau[j];
      for (int f = 0; f < 4; ++f) {
        // d lam_n / d k± = 1/norm, d lam_t / d k± = ±mu/norm
        g[lay.kw(k, f, 0)] += (dlam[2 * f] + mu * dlam[2 * f + 1]) / norm;
        g[lay.kw(k, f, 1)] += (dlam[2 * f] - mu * dlam[2 * f + 1]) / norm;
        g[lay.gam(k, f)] += self->params.weights.slack_weight;
      }
    }
    for (int r = 0; r < lay.num_pin_rows; ++r) {
      g[lay.sigma(r, 0)] += self->params.weights.slack_weight;
      g[lay.sigma(r, 1)] += self->params.weights.slack_weight;
    }
  };

  // --- equality rows ---
  p.num_eq = num_eq();
  const int row_pos_x = 0;
  const int row_pos_q = row_pos_x + rows_pos_x();
  const int row_vel_x = row_pos_q + rows_pos_q();
  const int row_vel_q = row_vel_x + rows_vel_x();
  const int row_pin = row_vel_q + rows_vel_q();
  p.eq_blocks = {{"position defects x", row_pos_x, row_pos_q},
                 {"position defects q", row_pos_q, row_vel_x},
                 {"velocity defects object", row_vel_x, row_vel_q},
                 {"velocity defects hand", row_vel_q, row_pin},
                 {"contact pinning", row_pin, num_eq()}};

  p.eq = [self, lay, dts](const VecX& z, VecX& out) {
    const SceneConfig& sc = self->scene;
    const int mm = lay.M;
    int r = 0;
    for (int k = 0; k < mm; ++k)
      for (int i = 0; i < 3; ++i)
        out[r++] = z[lay.x(k + 1, i)] - z[lay.x(k, i)] -
                   0.5 * dts * (z[lay.xd(k, i)] + z[lay.xd(k + 1, i)]);
    for (int k = 0; k < mm; ++k)
      for (int j = 0; j < 8; ++j)
        out[r++] = z[lay.q(k + 1, j)] - z[lay.q(k, j)] -
                   0.5 * dts * (z[lay.qd(k, j)] + z[lay.qd(k + 1, j)]);

    std::vector<std::array<double, 3>> accel(mm + 1);
    for (int k = 0; k <= mm; ++k) {
      double q[8], kw[8];
      for (int j = 0; j < 8; ++j) {
        q[j] = z[lay.q(k, j)];
        kw[j] = z[lay.kw(k, j / 2, j % 2)];
      }
      accel[k] = detail::eval_object_accel<double>(
          sc, {z[lay.x(k, 0)], z[lay.x(k, 1)]}, z[lay.x(k, 2)], q, kw);
    }
    for (int k = 0; k < mm; ++k)
      for (int i = 0; i < 3; ++i)
        out[r++] = z[lay.xd(k + 1, i)] - z[lay.xd(k, i)] -
                   0.5 * dts * (accel[k][i] + accel[k + 1][i]);

    const double inv_ih = 1.0 / self->params.hand_inertia;
    std::vector<std::array<double, 8>> rhs(mm + 1);
    for (int k = 0; k <= mm; ++k)
      for (int f = 0; f < 4; ++f) {
        const auto load = detail::eval_hand_load<double>(
            sc, f, {z[lay.x(k, 0)], z[lay.x(k, 1)]}, z[lay.x(k, 2)], z[lay.q(k, 2 * f)],
            z[lay.q(k, 2 * f + 1)], z[lay.kw(k, f, 0)], z[lay.kw(k, f, 1)]);
        rhs[k][2 * f] = (z[lay.tau(k, 2 * f)] - load[0]) * inv_ih;
        rhs[k][2 * f + 1] = (z[lay.tau(k, 2 * f + 1)] - load[1]) * inv_ih;
      }
    for (int k = 0; k < mm; ++k)
      for (int j = 0; j < 8; ++j)
        out[r++] = z[lay.qd(k + 1, j)] - z[lay.qd(k, j)] -
                   0.5 * dts * (rhs[k][j] + rhs[k + 1][j]);

    for (size_t pi = 0; pi < self->pins.size(); ++pi) {
      const auto& pin = self->pins[pi];
      const Vec2 tip = forward_kinematics(sc.finger_bases[pin.f], sc.link_lengths[pin.f].x(),
                                          sc.link_lengths[pin.f].y(), z[lay.q(pin.k, 2 * pin.f)],
                                          z[lay.q(pin.k, 2 * pin.f + 1)]);
      const double c = std::cos(z[lay.x(pin.k, 2)]), s = std::sin(z[lay.x(pin.k, 2)]);
      const Vec2 world(z[lay.x(pin.k, 0)] + c * pin.local_target.x() - s * pin.local_target.y(),
                       z[lay.x(pin.k, 1)] + s * pin.local_target.x() + c * pin.local_target.y());
      for (int i = 0; i < 2; ++i) {
        const int row_idx = static_cast<int>(2 * pi) + i;
        out[r++] = tip[i] - world[i] - z[lay.sigma(row_idx, 0)] + z[lay.sigma(row_idx, 1)];
      }
    }
  };

  // --- inequality rows ---
  p.num_ineq = num_ineq();
  {
    const int gap_rows = 4 * (m + 1);
    p.ineq_blocks = {{"contact gap", 0, gap_rows},
                     {"complementarity", gap_rows, num_ineq()}};
  }

  p.ineq = [self, lay](const VecX& z, VecX& out) {
    const SceneConfig& sc = self->scene;
    const double mu = sc.friction_mu;
    const double norm = std::sqrt(1.0 + mu * mu);
    int r = 0;
    // gaps for every finger-knot
    for (int k = 0; k <= lay.M; ++k) {
      const ObjectPose pose{z[lay.x(k, 0)], z[lay.x(k, 1)], z[lay.x(k, 2)]};
      for (int f = 0; f < 4; ++f) {
        const Vec2 tip = forward_kinematics(sc.finger_bases[f], sc.link_lengths[f].x(),
                                            sc.link_lengths[f].y(), z[lay.q(k, 2 * f)],
                                            z[lay.q(k, 2 * f + 1)]);
        out[r++] = signed_distance(sc.rect(), pose, tip, sc.fingertip_radius);
      }
    }
    // complementarity rows where active
    for (int k = 0; k <= lay.M; ++k)
      for (int f = 0; f < 4; ++f) {
        if (!self->comp_active[k][f]) continue;
        const auto ev = detail::eval_finger<double>(
            sc, f, {z[lay.x(k, 0)], z[lay.x(k, 1)]}, z[lay.x(k, 2)], z[lay.q(k, 2 * f)],
            z[lay.q(k, 2 * f + 1)], z[lay.qd(k, 2 * f)], z[lay.qd(k, 2 * f + 1)],
            {z[lay.xd(k, 0)], z[lay.xd(k, 1)]}, z[lay.xd(k, 2)], z[lay.kw(k, f, 0)],
            z[lay.kw(k, f, 1)]);
        const double gam = z[lay.gam(k, f)];
        out[r++] = gam - ev.phi * ev.ln;
        out[r++] = gam - ev.vn * ev.ln;
        out[r++] = gam + ev.vn * ev.ln;
        out[r++] = gam - ev.vt * ev.ln;
        out[r++] = gam + ev.vt * ev.ln;
      }
    (void)norm;
  };

  // --- Jacobians (pattern built once, values refilled in the same order) ---
  struct Emit {
    SparsityPattern* pat = nullptr;
    double* val = nullptr;
    int idx = 0;
    void operator()(int r, int c, double v) {
      if (pat)
        pat->add(r, c);
      else
        val[idx++] = v;
    }
  };

  auto emit_eq = [self, lay, dts](const VecX* z, Emit& emit) {
    const SceneConfig& sc = self->scene;
    const int mm = lay.M;
    int r = 0;
    for (int k = 0; k < mm; ++k)
      for (int i = 0; i < 3; ++i) {
        emit(r, lay.x(k + 1, i), 1.0);
        emit(r, lay.x(k, i), -1.0);
        emit(r, lay.xd(k, i), -0.5 * dts);
        emit(r, lay.xd(k + 1, i), -0.5 * dts);
        ++r;
      }
    for (int k = 0; k < mm; ++k)
      for (int j = 0; j < 8; ++j) {
        emit(r, lay.q(k + 1, j), 1.0);
        emit(r, lay.q(k, j), -1.0);
        emit(r, lay.qd(k, j), -0.5 * dts);
        emit(r, lay.qd(k + 1, j), -0.5 * dts);
        ++r;
      }

    // object velocity defects: accel duals per knot, 19 seeds
    using D19 = Dual<19>;
    std::vector<std::array<D19, 3>> acc(mm + 1);
    for (int k = 0; k <= mm; ++k) {
      V2<D19> center;
      D19 theta, q[8], kw[8];
      if (z) {
        center = {D19::seeded((*z)[lay.x(k, 0)], 0), D19::seeded((*z)[lay.x(k, 1)], 1)};
        theta = D19::seeded((*z)[lay.x(k, 2)], 2);
        for (int j = 0; j < 8; ++j) {
          q[j] = D19::seeded((*z)[lay.q(k, j)], 3 + j);
          kw[j] = D19::seeded((*z)[lay.kw(k, j / 2, j % 2)], 11 + j);
        }
      }
      acc[k] = detail::eval_object_accel<D19>(sc, center, theta, q, kw);
    }
    auto knot_col19 = [&lay](int k, int s) {
      if (s < 3) return lay.x(k, s);
      if (s < 11) return lay.q(k, s - 3);
      return lay.kw(k, (s - 11) / 2, (s - 11) % 2);
    };
    for (int k = 0; k < mm; ++k)
      for (int i = 0; i < 3; ++i) {
        emit(r, lay.xd(k + 1, i), 1.0);
        emit(r, lay.xd(k, i), -1.0);
        for (int s = 0; s < 19; ++s) emit(r, knot_col19(k, s), -0.5 * dts * acc[k][i].d[s]);
        for (int s = 0; s < 19; ++s)
          emit(r, knot_col19(k + 1, s), -0.5 * dts * acc[k + 1][i].d[s]);
        ++r;
      }

    // hand velocity defects: per finger-knot load duals, 7 seeds
    using D7 = Dual<7>;
    const double inv_ih = 1.0 / self->params.hand_inertia;
    std::vector<std::array<std::array<D7, 2>, 4>> load(mm + 1);
    for (int k = 0; k <= mm; ++k)
      for (int f = 0; f < 4; ++f) {
        V2<D7> center;
        D7 theta, q1, q2, kp, km;
        if (z) {
          center = {D7::seeded((*z)[lay.x(k, 0)], 0), D7::seeded((*z)[lay.x(k, 1)], 1)};
          theta = D7::seeded((*z)[lay.x(k, 2)], 2);
          q1 = D7::seeded((*z)[lay.q(k, 2 * f)], 3);
          q2 = D7::seeded((*z)[lay.q(k, 2 * f + 1)], 4);
          kp = D7::seeded((*z)[lay.kw(k, f, 0)], 5);
          km = D7::seeded((*z)[lay.kw(k, f, 1)], 6);
        }
        load[k][f] = detail::eval_hand_load<D7>(sc, f, center, theta, q1, q2, kp, km);
      }
    auto finger_col7 = [&lay](int k, int f, int s) {
      if (s < 3) return lay.x(k, s);
      if (s < 5) return lay.q(k, 2 * f + s - 3);
      return lay.kw(k, f, s - 5);
    };
    for (int k = 0; k < mm; ++k)
      for (int j = 0; j < 8; ++j) {
        const int f = j / 2, jl = j % 2;
        emit(r, lay.qd(k + 1, j), 1.0);
        emit(r, lay.qd(k, j), -1.0);
        emit(r, lay.tau(k, j), -0.5 * dts * inv_ih);
        emit(r, lay.tau(k + 1, j), -0.5 * dts * inv_ih);
        for (int s = 0; s < 7; ++s)
          emit(r, finger_col7(k, f, s), 0.5 * dts * inv_ih * load[k][f][jl].d[s]);
        for (int s = 0; s < 7; ++s)
          emit(r, finger_col7(k + 1, f, s), 0.5 * dts * inv_ih * load[k + 1][f][jl].d[s]);
        ++r;
      }

    // pinning rows: tip(q) - (x + R(theta) p*), 5 seeds [x(3) q(2)]
    using D5 = Dual<5>;
    for (size_t pi = 0; pi < self->pins.size(); ++pi) {
      const auto& pin = self->pins[pi];
      V2<D5> center;
      D5 theta, q1, q2;
      if (z) {
        center = {D5::seeded((*z)[lay.x(pin.k, 0)], 0), D5::seeded((*z)[lay.x(pin.k, 1)], 1)};
        theta = D5::seeded((*z)[lay.x(pin.k, 2)], 2);
        q1 = D5::seeded((*z)[lay.q(pin.k, 2 * pin.f)], 3);
        q2 = D5::seeded((*z)[lay.q(pin.k, 2 * pin.f + 1)], 4);
      }
      const V2<D5> tip = fk_tip(sc.finger_bases[pin.f], sc.link_lengths[pin.f].x(),
                                sc.link_lengths[pin.f].y(), q1, q2);
      const V2<D5> world =
          center + rotate(theta, V2<D5>{D5(pin.local_target.x()), D5(pin.local_target.y())});
      const V2<D5> res = tip - world;
      const D5* comps[2] = {&res.x, &res.y};
      for (int i = 0; i < 2; ++i) {
        const int row_idx = static_cast<int>(2 * pi) + i;
        emit(r, lay.x(pin.k, 0), comps[i]->d[0]);
        emit(r, lay.x(pin.k, 1), comps[i]->d[1]);
        emit(r, lay.x(pin.k, 2), comps[i]->d[2]);
        emit(r, lay.q(pin.k, 2 * pin.f), comps[i]->d[3]);
        emit(r, lay.q(pin.k, 2 * pin.f + 1), comps[i]->d[4]);
        emit(r, lay.sigma(row_idx, 0), -1.0);
        emit(r, lay.sigma(row_idx, 1), 1.0);
        ++r;
      }
    }
  };

  auto emit_ineq = [self, lay](const VecX* z, Emit& emit) {
    const SceneConfig& sc = self->scene;
    using D13 = Dual<13>;
    int r = 0;
    auto finger_col13 = [&lay](int k, int f, int s) {
      if (s < 3) return lay.x(k, s);
      if (s < 5) return lay.q(k, 2 * f + s - 3);
      if (s < 7) return lay.qd(k, 2 * f + s - 5);
      if (s < 10) return lay.xd(k, s - 7);
      if (s < 12) return lay.kw(k, f, s - 10);
      return lay.gam(k, f);
    };
    auto eval13 = [&](int k, int f) {
      V2<D13> center, xd;
      D13 theta, q1, q2, qd1, qd2, omega, kp, km;
      if (z) {
        center = {D13::seeded((*z)[lay.x(k, 0)], 0), D13::seeded((*z)[lay.x(k, 1)], 1)};
        theta = D13::seeded((*z)[lay.x(k, 2)], 2);
        q1 = D13::seeded((*z)[lay.q(k, 2 * f)], 3);
        q2 = D13::seeded((*z)[lay.q(k, 2 * f + 1)], 4);
        qd1 = D13::seeded((*z)[lay.qd(k, 2 * f)], 5);
        qd2 = D13::seeded((*z)[lay.qd(k, 2 * f + 1)], 6);
        xd = {D13::seeded((*z)[lay.xd(k, 0)], 7), D13::seeded((*z)[lay.xd(k, 1)], 8)};
        omega = D13::seeded((*z)[lay.xd(k, 2)], 9);
        kp = D13::seeded((*z)[lay.kw(k, f, 0)], 10);
        km = D13::seeded((*z)[lay.kw(k, f, 1)], 11);
      }
      return detail::eval_finger<D13>(sc, f, center, theta, q1, q2, qd1, qd2, xd, omega, kp,
                                      km);
    };
    auto emit_row = [&](int k, int f, const D13& expr) {
      for (int s = 0; s < 13; ++s) emit(r, finger_col13(k, f, s), expr.d[s]);
      ++r;
    };
    // gap rows (no gamma/velocity deps, but keep one uniform seed map)
    for (int k = 0; k <= lay.M; ++k)
      for (int f = 0; f < 4; ++f) {
        const auto ev = eval13(k, f);
        emit_row(k, f, ev.phi);
      }
    for (int k = 0; k <= lay.M; ++k)
      for (int f = 0; f < 4; ++f) {
        if (!self->comp_active[k][f]) continue;
        const auto ev = eval13(k, f);
        const D13 gam = z ? D13::seeded((*z)[lay.gam(k, f)], 12) : D13();
        emit_row(k, f, gam - ev.phi * ev.ln);
        emit_row(k, f, gam - ev.vn * ev.ln);
        emit_row(k, f, gam + ev.vn * ev.ln);
        emit_row(k, f, gam - ev.vt * ev.ln);
        emit_row(k, f, gam + ev.vt * ev.ln);
      }
  };

  // build patterns once
  {
    Emit e;
    p.eq_pattern.rows = p.num_eq;
    p.eq_pattern.cols = nv;
    e.pat = &p.eq_pattern;
    emit_eq(nullptr, e);
    Emit e2;
    p.ineq_pattern.rows = p.num_ineq;
    p.ineq_pattern.cols = nv;
    e2.pat = &p.ineq_pattern;
    emit_ineq(nullptr, e2);
  }
  p.eq_jac = [emit_eq](const VecX& z, VecX& vals) {
    Emit e;
    e.val = vals.data();
    emit_eq(&z, e);
  };
  p.ineq_jac = [emit_ineq](const VecX& z, VecX& vals) {
    Emit e;
    e.val = vals.data();
    emit_ineq(&z, e);
  };
  return p;
}

// --- plan packing / extraction ----------------------------------------------

inline VecX CitoProblem::pack_plan(const TrajectoryPlan& plan) const {
  CitoLayout lay = layout;
  lay.num_pin_rows = rows_pin();
  if (plan.steps() != lay.M) throw std::invalid_argument("pack_plan: step count mismatch");
  VecX z = VecX::Zero(lay.num_vars());
  const double mu = scene.friction_mu;
  const double norm = edge_norm();
  for (int k = 0; k <= lay.M; ++k) {
    for (int i = 0; i < 3; ++i) {
      z[lay.x(k, i)] = plan.x[k][i];
      z[lay.xd(k, i)] = plan.xd[k][i];
    }
    for (int j = 0; j < 8; ++j) {
      z[lay.q(k, j)] = plan.q[k][j];
      z[lay.qd(k, j)] = plan.qd[k][j];
      z[lay.tau(k, j)] = std::clamp(plan.tau[k][j], -params.tau_max, params.tau_max);
    }
    for (int f = 0; f < 4; ++f) {
      const double ln = plan.lam[k][2 * f], lt = plan.lam[k][2 * f + 1];
      const double kp = 0.5 * (ln + lt / mu) * norm;
      const double km = 0.5 * (ln - lt / mu) * norm;
      z[lay.kw(k, f, 0)] = std::max(0.0, kp);
      z[lay.kw(k, f, 1)] = std::max(0.0, km);
      z[lay.gam(k, f)] = std::max(0.0, plan.gam[k][f]);
    }
  }
  // pinning slacks from the residuals of the packed state
  for (size_t pi = 0; pi < pins.size(); ++pi) {
    const auto& pin = pins[pi];
    const Vec2 tip = forward_kinematics(scene.finger_bases[pin.f], scene.link_lengths[pin.f].x(),
                                        scene.link_lengths[pin.f].y(), z[lay.q(pin.k, 2 * pin.f)],
                                        z[lay.q(pin.k, 2 * pin.f + 1)]);
    const ObjectPose pose{z[lay.x(pin.k, 0)], z[lay.x(pin.k, 1)], z[lay.x(pin.k, 2)]};
    const Vec2 world = pose.to_world(pin.local_target);
    for (int i = 0; i < 2; ++i) {
      const double res = tip[i] - world[i];
      const int row_idx = static_cast<int>(2 * pi) + i;
      z[lay.sigma(row_idx, 0)] = std::max(0.0, res);
      z[lay.sigma(row_idx, 1)] = std::max(0.0, -res);
    }
  }
  return z;
}

inline TrajectoryPlan CitoProblem::extract_plan(const VecX& z) const {
  CitoLayout lay = layout;
  lay.num_pin_rows = rows_pin();
  TrajectoryPlan plan;
  plan.dt = dt;
  plan.mhat = mhat;
  plan.schedule = schedule;
  const int m = lay.M;
  plan.x.resize(m + 1);
  plan.xd.resize(m + 1);
  plan.q.resize(m + 1);
  plan.qd.resize(m + 1);
  plan.tau.resize(m + 1);
  plan.lam.resize(m + 1);
  plan.gam.resize(m + 1);
  const double mu = scene.friction_mu;
  const double norm = edge_norm();
  for (int k = 0; k <= m; ++k) {
    for (int i = 0; i < 3; ++i) {
      plan.x[k][i] = z[lay.x(k, i)];
      plan.xd[k][i] = z[lay.xd(k, i)];
    }
    for (int j = 0; j < 8; ++j) {
      plan.q[k][j] = z[lay.q(k, j)];
      plan.qd[k][j] = z[lay.qd(k, j)];
      plan.tau[k][j] = z[lay.tau(k, j)];
    }
    for (int f = 0; f < 4; ++f) {
      double ln, lt;
      lam_from_edges(std::max(0.0, z[lay.kw(k, f, 0)]), std::max(0.0, z[lay.kw(k, f, 1)]), mu,
                     norm, ln, lt);
      plan.lam[k][2 * f] = ln;
      plan.lam[k][2 * f + 1] = lt;
      plan.gam[k][f] = std::max(0.0, z[lay.gam(k, f)]);
    }
  }
  // tighten slacks to the exact row minima so the reported plan satisfies the
  // complementarity rows it was solved with
  for (int k = 0; k <= m; ++k) {
    const ObjectPose pose{plan.x[k][0], plan.x[k][1], plan.x[k][2]};
    for (int f = 0; f < 4; ++f) {
      if (!comp_active[k][f]) continue;
      const auto ev = detail::eval_finger<double>(
          scene, f, {plan.x[k][0], plan.x[k][1]}, plan.x[k][2], plan.q[k][2 * f],
          plan.q[k][2 * f + 1], plan.qd[k][2 * f], plan.qd[k][2 * f + 1],
          {plan.xd[k][0], plan.xd[k][1]}, plan.xd[k][2],
          std::max(0.0, z[lay.kw(k, f, 0)]), std::max(0.0, z[lay.kw(k, f, 1)]));
      const double need =
          std::max({ev.phi * ev.ln, std::abs(ev.vn * ev.ln), std::abs(ev.vt * ev.ln)});
      plan.gam[k][f] = std::max(plan.gam[k][f], need);
    }
    (void)pose;
  }
  return plan;
}

// --- initial guesses ----------------------------------------------------------

// Static equilibrium: hold the start state with gravity-balancing forces.
inline TrajectoryPlan initial_guess_static(const SceneConfig& scene, const ObjectPose& pose,
                                           const JointConfig& joints,
                                           const std::array<ContactPoint, 4>& contacts, int m,
                                           double dt) {
  TrajectoryPlan plan;
  plan.dt = dt;
  const auto lam = balance_forces(scene, pose, contacts);
  const auto J = hand_jacobian(scene, pose, joints, contacts);
  const Eigen::Matrix<double, 8, 1> tau = J.transpose() * lam;
  plan.x.assign(m + 1, pose.vec());
  plan.xd.assign(m + 1, Vec3::Zero());
  Eigen::Matrix<double, 8, 1> qv;
  for (int j = 0; j < 8; ++j) qv[j] = joints.angles[j];
  plan.q.assign(m + 1, qv);
  plan.qd.assign(m + 1, Eigen::Matrix<double, 8, 1>::Zero());
  plan.tau.assign(m + 1, tau);
  plan.lam.assign(m + 1, lam);
  plan.gam.assign(m + 1, Eigen::Matrix<double, 4, 1>::Zero());
  return plan;
}

// Warm start from a contact-sequence plan: poses and joints piecewise-linear
// through the nodes, balance forces per node, velocities by finite
// differences (zero at segment boundaries).
inline TrajectoryPlan initial_guess_from_sequence(const SceneConfig& scene,
                                                  const ContactSequence& seq, int mhat,
                                                  double dt) {
  const int n = static_cast<int>(seq.nodes.size());
  const int m = (n - 1) * mhat;
  TrajectoryPlan plan;
  plan.dt = dt;
  plan.mhat = mhat;
  plan.x.resize(m + 1);
  plan.xd.resize(m + 1);
  plan.q.resize(m + 1);
  plan.qd.resize(m + 1);
  plan.tau.resize(m + 1);
  plan.lam.resize(m + 1);
  plan.gam.assign(m + 1, Eigen::Matrix<double, 4, 1>::Zero());

  std::vector<Eigen::Matrix<double, 8, 1>> node_lam(n), node_tau(n), node_q(n);
  for (int s = 0; s < n; ++s) {
    node_lam[s] = balance_forces(scene, seq.nodes[s].pose, seq.nodes[s].contacts);
    const auto J =
        hand_jacobian(scene, seq.nodes[s].pose, seq.nodes[s].joints, seq.nodes[s].contacts);
    node_tau[s] = J.transpose() * node_lam[s];
    for (int j = 0; j < 8; ++j) node_q[s][j] = seq.nodes[s].joints.angles[j];
  }

  for (int k = 0; k <= m; ++k) {
    const int s = std::min(k / mhat, n - 2);
    const double t = mhat <= 1 ? 0.0 : static_cast<double>(k - s * mhat) / (mhat - 1);
    const double a = std::min(1.0, t);
    plan.x[k] = (1 - a) * seq.nodes[s].pose.vec() + a * seq.nodes[s + 1].pose.vec();
    plan.q[k] = (1 - a) * node_q[s] + a * node_q[s + 1];
    plan.lam[k] = (1 - a) * node_lam[s] + a * node_lam[s + 1];
    plan.tau[k] = (1 - a) * node_tau[s] + a * node_tau[s + 1];
  }
  for (int k = 0; k <= m; ++k) {
    const bool boundary = (k % mhat == 0) || ((k + 1) % mhat == 0) || k == m;
    if (boundary) {
      plan.xd[k].setZero();
      plan.qd[k].setZero();
    } else {
      plan.xd[k] = (plan.x[k + 1] - plan.x[k]) / dt;
      plan.qd[k] = (plan.q[k + 1] - plan.q[k]) / dt;
    }
  }
  for (int s = 0; s + 1 < n; ++s) {
    // schedule info travels with the guess for convenience
    SegmentSchedule sched;
    sched.free_finger = seq.switch_schedule[s];
    for (int f = 0; f < 4; ++f) {
      sched.s_begin[f] = seq.nodes[s].contacts[f].s;
      sched.s_end[f] = seq.nodes[s + 1].contacts[f].s;
    }
    plan.schedule.push_back(sched);
  }
  return plan;
}

}  // namespace tt
