#include <catch2/catch_amalgamated.hpp>

#include "trajectotree/solver.hpp"

using namespace tt;
using Catch::Approx;

namespace {

NlpProblem empty_problem(int n) {
  NlpProblem p;
  p.num_vars = n;
  p.lb = VecX::Constant(n, -std::numeric_limits<double>::infinity());
  p.ub = VecX::Constant(n, std::numeric_limits<double>::infinity());
  p.eq = [](const VecX&, VecX&) {};
  p.ineq = [](const VecX&, VecX&) {};
  p.eq_jac = [](const VecX&, VecX&) {};
  p.ineq_jac = [](const VecX&, VecX&) {};
  return p;
}

// Dense convex QP: min 1/2 z'Qz + c'z  s.t.  A z >= b, E z = d.
struct Qp {
  MatX Q;
  VecX c;
  MatX A;
  VecX b;
  MatX E;
  VecX d;
};

NlpProblem qp_problem(const Qp& qp) {
  const int n = static_cast<int>(qp.c.size());
  NlpProblem p = empty_problem(n);
  p.cost = [qp](const VecX& z) { return 0.5 * z.dot(qp.Q * z) + qp.c.dot(z); };
  p.cost_grad = [qp](const VecX& z, VecX& g) { g = qp.Q * z + qp.c; };
  p.num_ineq = static_cast<int>(qp.b.size());
  p.num_eq = static_cast<int>(qp.d.size());
  p.ineq = [qp](const VecX& z, VecX& out) { out = qp.A * z - qp.b; };
  p.eq = [qp](const VecX& z, VecX& out) { out = qp.E * z - qp.d; };
  p.ineq_pattern.rows = p.num_ineq;
  p.ineq_pattern.cols = n;
  for (int r = 0; r < p.num_ineq; ++r)
    for (int cidx = 0; cidx < n; ++cidx) p.ineq_pattern.add(r, cidx);
  p.eq_pattern.rows = p.num_eq;
  p.eq_pattern.cols = n;
  for (int r = 0; r < p.num_eq; ++r)
    for (int cidx = 0; cidx < n; ++cidx) p.eq_pattern.add(r, cidx);
  p.ineq_jac = [qp, n](const VecX&, VecX& v) {
    int t = 0;
    for (int r = 0; r < qp.A.rows(); ++r)
      for (int cidx = 0; cidx < n; ++cidx) v[t++] = qp.A(r, cidx);
  };
  p.eq_jac = [qp, n](const VecX&, VecX& v) {
    int t = 0;
    for (int r = 0; r < qp.E.rows(); ++r)
      for (int cidx = 0; cidx < n; ++cidx) v[t++] = qp.E(r, cidx);
  };
  return p;
}

// Active-set enumeration oracle: try every subset of inequalities as the
// active set, solve the KKT system, keep primal/dual feasible candidates.
std::optional<double> qp_active_set_oracle(const Qp& qp) {
  const int n = static_cast<int>(qp.c.size());
  const int m = static_cast<int>(qp.b.size());
  const int me = static_cast<int>(qp.d.size());
  std::optional<double> best;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    MatX K = MatX::Zero(n + me + k, n + me + k);
    VecX rhs(n + me + k);
    K.topLeftCorner(n, n) = qp.Q;
    rhs.head(n) = -qp.c;
    for (int r = 0; r < me; ++r) {
      K.block(n + r, 0, 1, n) = qp.E.row(r);
      K.block(0, n + r, n, 1) = -qp.E.row(r).transpose();
      rhs[n + r] = qp.d[r];
    }
    for (int r = 0; r < k; ++r) {
      K.block(n + me + r, 0, 1, n) = qp.A.row(act[r]);
      K.block(0, n + me + r, n, 1) = -qp.A.row(act[r]).transpose();
      rhs[n + me + r] = qp.b[act[r]];
    }
    Eigen::FullPivLU<MatX> lu(K);
    if (!lu.isInvertible()) continue;
    const VecX sol = lu.solve(rhs);
    const VecX z = sol.head(n);
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) ok = qp.A.row(i).dot(z) >= qp.b[i] - 1e-8;
    for (int r = 0; r < k && ok; ++r) ok = sol[n + me + r] >= -1e-8;  // dual feasibility
    if (!ok) continue;
    const double f = 0.5 * z.dot(qp.Q * z) + qp.c.dot(z);
    if (!best || f < *best) best = f;
  }
  return best;
}

}  // namespace

TEST_CASE("active bound: min (z-3)^2 with z >= 5") {
  NlpProblem p = empty_problem(1);
  p.lb[0] = 5.0;
  p.cost = [](const VecX& z) { return (z[0] - 3.0) * (z[0] - 3.0); };
  p.cost_grad = [](const VecX& z, VecX& g) { g[0] = 2.0 * (z[0] - 3.0); };
  const auto sol = solve(p, VecX::Constant(1, 7.0), SolverOptions{});
  REQUIRE(sol.status == SolveStatus::Converged);
  REQUIRE(sol.z[0] == Approx(5.0).margin(1e-8));
}

TEST_CASE("projection onto a line: min |z|^2 with z1 + z2 = 1") {
  Qp qp;
  qp.Q = 2.0 * MatX::Identity(2, 2);
  qp.c = VecX::Zero(2);
  qp.A = MatX::Zero(0, 2);
  qp.b = VecX::Zero(0);
  qp.E = MatX::Ones(1, 2);
  qp.d = VecX::Ones(1);
  const auto sol = solve(qp_problem(qp), VecX::Zero(2), SolverOptions{});
  REQUIRE(sol.status == SolveStatus::Converged);
  REQUIRE(sol.z[0] == Approx(0.5).margin(1e-6));
  REQUIRE(sol.z[1] == Approx(0.5).margin(1e-6));
  REQUIRE(sol.max_violation <= 1e-6);
}

TEST_CASE("nonlinear equality: projection onto the unit circle") {
  NlpProblem p = empty_problem(2);
  p.cost = [](const VecX& z) { return (z[0] - 2.0) * (z[0] - 2.0) + z[1] * z[1]; };
  p.cost_grad = [](const VecX& z, VecX& g) {
    g[0] = 2.0 * (z[0] - 2.0);
    g[1] = 2.0 * z[1];
  };
  p.num_eq = 1;
  p.eq = [](const VecX& z, VecX& h) { h[0] = z.squaredNorm() - 1.0; };
  p.eq_pattern.rows = 1;
  p.eq_pattern.cols = 2;
  p.eq_pattern.add(0, 0);
  p.eq_pattern.add(0, 1);
  p.eq_jac = [](const VecX& z, VecX& v) {
    v[0] = 2.0 * z[0];
    v[1] = 2.0 * z[1];
  };
  VecX init(2);
  init << 0.3, 0.4;
  const auto sol = solve(p, init, SolverOptions{});
  REQUIRE(sol.status == SolveStatus::Converged);
  REQUIRE(sol.z[0] == Approx(1.0).margin(1e-5));
  REQUIRE(sol.z[1] == Approx(0.0).margin(1e-5));
}

TEST_CASE("random convex QPs match the active-set enumeration oracle") {
  Rng rng(90210);
  SolverOptions opt;
  opt.constraint_tol = 1e-8;
  opt.optimality_tol = 1e-5;
  opt.inner_iteration_budget = 4000;
  int checked = 0;
  while (checked < 100) {
    const int n = rng.uniform_int(2, 20);
    const int m = rng.uniform_int(1, 10);
    const int me = rng.uniform_int(0, std::min(2, n - 1));
    Qp qp;
    MatX B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.uniform(-1, 1);
    qp.Q = B * B.transpose() + static_cast<double>(n) * MatX::Identity(n, n);
    qp.c = VecX::Zero(n);
    for (int i = 0; i < n; ++i) qp.c[i] = rng.uniform(-2, 2);
    qp.A = MatX::Zero(m, n);
    qp.b = VecX::Zero(m);
    VecX z0 = VecX::Zero(n);
    for (int i = 0; i < n; ++i) z0[i] = rng.uniform(-0.5, 0.5);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) qp.A(i, j) = rng.uniform(-1, 1);
      qp.b[i] = qp.A.row(i).dot(z0) - rng.uniform(0.05, 1.0);  // z0 strictly feasible
    }
    qp.E = MatX::Zero(me, n);
    qp.d = VecX::Zero(me);
    for (int i = 0; i < me; ++i) {
      for (int j = 0; j < n; ++j) qp.E(i, j) = rng.uniform(-1, 1);
      qp.d[i] = qp.E.row(i).dot(z0);
    }

    const auto oracle = qp_active_set_oracle(qp);
    if (!oracle) continue;
    const auto sol = solve(qp_problem(qp), VecX::Zero(n), opt);
    REQUIRE(sol.status == SolveStatus::Converged);
    REQUIRE(sol.objective == Approx(*oracle).margin(1e-6));
    ++checked;
  }
}

TEST_CASE("violation sequence is monotone unless the penalty grows") {
  // badly scaled nonlinear equalities force several outer iterations
  NlpProblem p = empty_problem(3);
  p.cost = [](const VecX& z) { return z.squaredNorm(); };
  p.cost_grad = [](const VecX& z, VecX& g) { g = 2.0 * z; };
  p.num_eq = 2;
  p.eq = [](const VecX& z, VecX& h) {
    h[0] = 50.0 * (z[0] * z[1] - 0.3);
    h[1] = z[2] - z[0] * z[0] - 1.0;
  };
  p.eq_pattern.rows = 2;
  p.eq_pattern.cols = 3;
  p.eq_pattern.add(0, 0);
  p.eq_pattern.add(0, 1);
  p.eq_pattern.add(1, 0);
  p.eq_pattern.add(1, 2);
  p.eq_jac = [](const VecX& z, VecX& v) {
    v[0] = 50.0 * z[1];
    v[1] = 50.0 * z[0];
    v[2] = -2.0 * z[0];
    v[3] = 1.0;
  };
  VecX init(3);
  init << 1.0, 1.0, 0.0;
  const auto sol = solve(p, init, SolverOptions{});
  REQUIRE(sol.status == SolveStatus::Converged);
  // property: above tolerance, a violation increase at record j entails
  // penalty growth at j+1 (sub-tolerance records are just roundoff noise)
  for (size_t j = 1; j + 1 < sol.log.size(); ++j) {
    if (sol.log[j].violation <= 1e-6) continue;
    const bool nonincreasing = sol.log[j].violation <= sol.log[j - 1].violation * (1 + 1e-9);
    const bool penalty_grew = sol.log[j + 1].penalty > sol.log[j].penalty;
    REQUIRE((nonincreasing || penalty_grew));
  }
}

TEST_CASE("determinism: identical runs produce identical logs") {
  Qp qp;
  qp.Q = MatX::Identity(4, 4);
  qp.c = VecX::Constant(4, -1.0);
  qp.A = MatX::Identity(4, 4);
  qp.b = VecX::Constant(4, -2.0);
  qp.E = MatX::Ones(1, 4);
  qp.d = VecX::Constant(1, 1.0);
  const NlpProblem p = qp_problem(qp);
  const auto a = solve(p, VecX::Zero(4), SolverOptions{});
  const auto b = solve(p, VecX::Zero(4), SolverOptions{});
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    REQUIRE(a.log[i].objective == b.log[i].objective);
    REQUIRE(a.log[i].violation == b.log[i].violation);
    REQUIRE(a.log[i].penalty == b.log[i].penalty);
    REQUIRE(a.log[i].stationarity == b.log[i].stationarity);
    REQUIRE(a.log[i].inner_iterations == b.log[i].inner_iterations);
  }
  REQUIRE((a.z - b.z).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("feasibility certificate: converged solutions re-verify independently") {
  Rng rng(5150);
  SolverOptions opt;
  for (int trial = 0; trial < 10; ++trial) {
    Qp qp;
    const int n = 6;
    MatX B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.uniform(-1, 1);
    qp.Q = B * B.transpose() + n * MatX::Identity(n, n);
    qp.c = VecX::Constant(n, 1.0);
    qp.A = MatX::Identity(n, n);
    qp.b = VecX::Constant(n, -1.0);
    qp.E = MatX::Ones(2, n);
    qp.E.row(1) << 1, -1, 1, -1, 1, -1;
    qp.d = VecX::Zero(2);
    const NlpProblem p = qp_problem(qp);
    const auto sol = solve(p, VecX::Zero(n), opt);
    REQUIRE(sol.status == SolveStatus::Converged);
    REQUIRE(max_violation(p, sol.z) <= opt.constraint_tol);
    REQUIRE(sol.stationarity <= opt.optimality_tol);
  }
}

TEST_CASE("non-finite evaluator at the start point diverges with diagnostics") {
  NlpProblem p = empty_problem(2);
  p.cost = [](const VecX&) { return 0.0; };
  p.cost_grad = [](const VecX&, VecX& g) { g.setZero(); };
  p.num_eq = 1;
  p.eq = [](const VecX&, VecX& h) { h[0] = std::numeric_limits<double>::quiet_NaN(); };
  p.eq_pattern.rows = 1;
  p.eq_pattern.cols = 2;
  p.eq_pattern.add(0, 0);
  p.eq_jac = [](const VecX&, VecX& v) { v[0] = 1.0; };
  p.eq_blocks.push_back({"bad block", 0, 1});
  const auto sol = solve(p, VecX::Zero(2), SolverOptions{});
  REQUIRE(sol.status == SolveStatus::Diverged);
  REQUIRE(sol.diagnostic.find("bad block") != std::string::npos);
}

TEST_CASE("initial point outside bounds is clamped and flagged") {
  NlpProblem p = empty_problem(1);
  p.lb[0] = 0.0;
  p.ub[0] = 1.0;
  p.cost = [](const VecX& z) { return z[0] * z[0]; };
  p.cost_grad = [](const VecX& z, VecX& g) { g[0] = 2.0 * z[0]; };
  const auto sol = solve(p, VecX::Constant(1, 9.0), SolverOptions{});
  REQUIRE(sol.init_clamped);
  REQUIRE(sol.status == SolveStatus::Converged);
  REQUIRE(sol.z[0] == Approx(0.0).margin(1e-9));
}

TEST_CASE("derivative checker") {
  Qp qp;
  qp.Q = MatX::Identity(3, 3);
  qp.c = VecX::Ones(3);
  qp.A = MatX::Random(2, 3);
  qp.b = VecX::Zero(2);
  qp.E = MatX::Random(1, 3);
  qp.d = VecX::Zero(1);
  NlpProblem p = qp_problem(qp);
  p.eq_blocks.push_back({"linear eq", 0, 1});
  p.ineq_blocks.push_back({"linear ineq", 0, 2});
  VecX z(3);
  z << 0.3, -0.2, 0.9;

  SECTION("linear blocks check out to roundoff") {
    const auto report = check_derivatives(p, z);
    REQUIRE(report.worst() < 1e-9);
  }

  SECTION("a corrupted Jacobian entry becomes the worst offender") {
    NlpProblem bad = p;
    const auto good_jac = p.ineq_jac;
    bad.ineq_jac = [good_jac](const VecX& zz, VecX& v) {
      good_jac(zz, v);
      v[1] += 0.5;  // corrupt row 0, col 1
    };
    const auto report = check_derivatives(bad, z);
    REQUIRE(report.entries.front().block == "linear ineq");
    REQUIRE(report.entries.front().row == 0);
    REQUIRE(report.entries.front().col == 1);
    REQUIRE(report.worst() > 0.1);
  }
}
