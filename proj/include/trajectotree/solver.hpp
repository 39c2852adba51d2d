#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>

#include "trajectotree/nlp.hpp"

namespace tt {

enum class SolveStatus { Converged, IterationLimit, TimeLimit, Diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::IterationLimit: return "iteration-limit";
    case SolveStatus::TimeLimit: return "time-limit";
    case SolveStatus::Diverged: return "diverged";
  }
  return "?";
}

struct SolverOptions {
  int max_outer_iterations = 50;
  double constraint_tol = 1e-6;
  double optimality_tol = 1e-4;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  int inner_iteration_budget = 2000;
  double time_limit_s = 600.0;
  int lbfgs_memory = 10;
  std::string iteration_log_path;  // when set: one CSV record per outer iteration
};

struct OuterIterationRecord {
  int iter = 0;
  double objective = 0.0;
  double violation = 0.0;   // ||[h; g - s]||_inf, unscaled
  double penalty = 0.0;     // rho used during this iteration
  double stationarity = 0.0;
  int inner_iterations = 0;
};

struct NlpSolution {
  VecX z;
  double objective = 0.0;
  double max_violation = 0.0;   // independent re-evaluation of eq/ineq/bounds
  double stationarity = 0.0;
  SolveStatus status = SolveStatus::Diverged;
  std::vector<OuterIterationRecord> log;
  bool init_clamped = false;
  std::string diagnostic;
};

namespace detail {

// Augmented Lagrangian working set: slack-reformulated constraints
// H(z, s) = [h(z); g(z) - s] with bounds s >= 0.
class AugLag {
 public:
  AugLag(const NlpProblem& p, const SolverOptions& opt) : p_(p), opt_(opt) {
    n_ = p.num_vars;
    me_ = p.num_eq;
    mi_ = p.num_ineq;
    m_ = me_ + mi_;
    nw_ = n_ + mi_;
    lb_.resize(nw_);
    ub_.resize(nw_);
    lb_.head(n_) = p.lb;
    ub_.head(n_) = p.ub;
    lb_.tail(mi_).setZero();
    ub_.tail(mi_).setConstant(std::numeric_limits<double>::infinity());
    heq_.resize(me_);
    gin_.resize(mi_);
    jeq_.resize(p.eq_pattern.nnz());
    jin_.resize(p.ineq_pattern.nnz());
    scale_ = VecX::Ones(m_);
    lambda_ = VecX::Zero(m_);
  }

  int nw() const { return nw_; }
  const VecX& lb() const { return lb_; }
  const VecX& ub() const { return ub_; }
  VecX& lambda() { return lambda_; }
  double rho = 10.0;

  // Row scaling from the Jacobian at the start point.
  void compute_scaling(const VecX& w) {
    eval_constraints(w.head(n_));
    eval_jacobians(w.head(n_));
    VecX norms = VecX::Zero(m_);
    const auto& ep = p_.eq_pattern;
    for (int t = 0; t < ep.nnz(); ++t)
      norms[ep.row[t]] = std::max(norms[ep.row[t]], std::abs(jeq_[t]));
    const auto& ip = p_.ineq_pattern;
    for (int t = 0; t < ip.nnz(); ++t)
      norms[me_ + ip.row[t]] = std::max(norms[me_ + ip.row[t]], std::abs(jin_[t]));
    for (int r = 0; r < m_; ++r) scale_[r] = 1.0 / std::max(1.0, norms[r]);
  }

  void eval_constraints(const VecX& z) {
    if (me_ > 0) p_.eq(z, heq_);
    if (mi_ > 0) p_.ineq(z, gin_);
  }
  void eval_jacobians(const VecX& z) {
    if (me_ > 0) p_.eq_jac(z, jeq_);
    if (mi_ > 0) p_.ineq_jac(z, jin_);
  }

  // H in the scaled metric used by multipliers and the penalty.
  void residual_scaled(const VecX& w, VecX& out) const {
    out.resize(m_);
    for (int r = 0; r < me_; ++r) out[r] = scale_[r] * heq_[r];
    for (int r = 0; r < mi_; ++r) out[me_ + r] = scale_[me_ + r] * (gin_[r] - w[n_ + r]);
  }

  double residual_unscaled_inf(const VecX& w) const {
    double v = 0.0;
    for (int r = 0; r < me_; ++r) v = std::max(v, std::abs(heq_[r]));
    for (int r = 0; r < mi_; ++r) v = std::max(v, std::abs(gin_[r] - w[n_ + r]));
    return v;
  }

  // Value of the augmented Lagrangian; assumes eval_constraints was run for z.
  double value(const VecX& w, double fz) const {
    VecX H;
    residual_scaled(w, H);
    return fz - lambda_.dot(H) + 0.5 * rho * H.squaredNorm();
  }

  // Gradient; assumes constraints and Jacobians were evaluated at z.
  void gradient(const VecX& w, const VecX& grad_f, VecX& out) const {
    VecX H;
    residual_scaled(w, H);
    const VecX y = (rho * H - lambda_).cwiseProduct(scale_);
    out.setZero(nw_);
    out.head(n_) = grad_f;
    const auto& ep = p_.eq_pattern;
    for (int t = 0; t < ep.nnz(); ++t) out[ep.col[t]] += jeq_[t] * y[ep.row[t]];
    const auto& ip = p_.ineq_pattern;
    for (int t = 0; t < ip.nnz(); ++t) out[ip.col[t]] += jin_[t] * y[me_ + ip.row[t]];
    for (int r = 0; r < mi_; ++r) out[n_ + r] = -y[me_ + r];
  }

  void update_multipliers(const VecX& w) {
    VecX H;
    residual_scaled(w, H);
    lambda_ -= rho * H;
  }

  const VecX& heq() const { return heq_; }
  const VecX& gin() const { return gin_; }
  int n() const { return n_; }
  int mi() const { return mi_; }

 private:
  const NlpProblem& p_;
  const SolverOptions& opt_;
  int n_ = 0, me_ = 0, mi_ = 0, m_ = 0, nw_ = 0;
  VecX lb_, ub_, heq_, gin_, jeq_, jin_, scale_, lambda_;
};

}  // namespace detail

// Augmented-Lagrangian solve with a projected L-BFGS inner loop. Deterministic
// for identical inputs and options.
inline NlpSolution solve(const NlpProblem& p, const VecX& init, const SolverOptions& opt) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  NlpSolution sol;
  detail::AugLag al(p, opt);
  const int n = p.num_vars, nw = al.nw();

  VecX w(nw);
  w.head(n) = init;
  for (int i = 0; i < n; ++i) {
    const double c = std::clamp(init[i], p.lb[i], p.ub[i]);
    if (c != init[i]) sol.init_clamped = true;
    w[i] = c;
  }

  // Start diagnostics: every evaluator must be finite at the start point.
  {
    const double f0 = p.cost(w.head(n));
    al.eval_constraints(w.head(n));
    auto finite = [](const VecX& v) { return v.allFinite(); };
    if (!std::isfinite(f0) || !finite(al.heq()) || !finite(al.gin())) {
      sol.status = SolveStatus::Diverged;
      sol.diagnostic = "non-finite evaluator output at the start point";
      if (!std::isfinite(f0)) sol.diagnostic += " (cost)";
      for (int r = 0; r < p.num_eq; ++r)
        if (!std::isfinite(al.heq()[r])) {
          for (const auto& b : p.eq_blocks)
            if (r >= b.begin && r < b.end) {
              sol.diagnostic += " (eq block " + b.name + ", row " + std::to_string(r) + ")";
              r = p.num_eq;
              break;
            }
          break;
        }
      for (int r = 0; r < p.num_ineq && sol.diagnostic.find("row") == std::string::npos; ++r)
        if (!std::isfinite(al.gin()[r])) {
          for (const auto& b : p.ineq_blocks)
            if (r >= b.begin && r < b.end) {
              sol.diagnostic += " (ineq block " + b.name + ", row " + std::to_string(r) + ")";
              break;
            }
          break;
        }
      sol.z = w.head(n);
      sol.objective = f0;
      return sol;
    }
    for (int r = 0; r < p.num_ineq; ++r) w[n + r] = std::max(0.0, al.gin()[r]);
  }
  al.compute_scaling(w);
  al.rho = opt.initial_penalty;

  // Value-only path used by the line search.
  auto eval_value = [&](const VecX& ww) {
    const double f = p.cost(ww.head(n));
    al.eval_constraints(ww.head(n));
    if (!std::isfinite(f) || !al.heq().allFinite() || !al.gin().allFinite())
      return std::numeric_limits<double>::infinity();
    return al.value(ww, f);
  };
  VecX grad_f(n);
  auto eval_grad = [&](const VecX& ww, VecX& g) {
    p.cost_grad(ww.head(n), grad_f);
    al.eval_jacobians(ww.head(n));
    al.gradient(ww, grad_f, g);
  };
  auto projected_gradient_norm = [&](const VecX& ww, const VecX& g) {
    double m = 0.0;
    for (int i = 0; i < nw; ++i) {
      const double step = std::clamp(ww[i] - g[i], al.lb()[i], al.ub()[i]) - ww[i];
      m = std::max(m, std::abs(step));
    }
    return m;
  };

  // Projected L-BFGS inner minimization.
  auto inner_minimize = [&](VecX& ww, double tol, int budget, int& iters_out) {
    std::deque<std::pair<VecX, VecX>> mem;  // (step, grad diff)
    double fval = eval_value(ww);
    VecX g(nw);
    eval_grad(ww, g);
    double pg = projected_gradient_norm(ww, g);
    int it = 0;
    while (it < budget && pg > tol) {
      if (elapsed() > opt.time_limit_s) break;
      // mask: freeze coordinates pinned at bounds with outward gradient
      VecX gm = g;
      for (int i = 0; i < nw; ++i) {
        const bool at_lo = ww[i] <= al.lb()[i] + 1e-12 && g[i] > 0.0;
        const bool at_hi = ww[i] >= al.ub()[i] - 1e-12 && g[i] < 0.0;
        if (at_lo || at_hi) gm[i] = 0.0;
      }
      // two-loop recursion
      VecX d = -gm;
      if (!mem.empty()) {
        std::vector<double> alpha(mem.size());
        for (int k = static_cast<int>(mem.size()) - 1; k >= 0; --k) {
          const auto& [sv, yv] = mem[k];
          const double rhok = 1.0 / yv.dot(sv);
          alpha[k] = rhok * sv.dot(d);
          d -= alpha[k] * yv;
        }
        const auto& [sl, yl] = mem.back();
        d *= sl.dot(yl) / yl.dot(yl);
        for (size_t k = 0; k < mem.size(); ++k) {
          const auto& [sv, yv] = mem[k];
          const double rhok = 1.0 / yv.dot(sv);
          const double beta = rhok * yv.dot(d);
          d += (alpha[k] - beta) * sv;
        }
        for (int i = 0; i < nw; ++i)
          if (gm[i] == 0.0 && g[i] != 0.0) d[i] = 0.0;  // keep frozen set frozen
        if (d.dot(gm) > -1e-12 * d.norm() * gm.norm()) d = -gm;  // not a descent direction
      }

      // projected backtracking line search; falls back to steepest descent
      VecX w_new(nw);
      double f_new = std::numeric_limits<double>::infinity();
      bool accepted = false;
      for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
        if (attempt == 1) {
          if (mem.empty()) break;  // already tried -gm
          d = -gm;
        }
        double step = 1.0;
        for (int ls = 0; ls < 40; ++ls) {
          w_new = ww + step * d;
          for (int i = 0; i < nw; ++i) w_new[i] = std::clamp(w_new[i], al.lb()[i], al.ub()[i]);
          f_new = eval_value(w_new);
          const double pred = g.dot(w_new - ww);
          const double roundoff = 1e-15 * (1.0 + std::abs(fval));
          if (std::isfinite(f_new) && f_new <= fval + 1e-4 * pred + roundoff && pred < 0.0) {
            accepted = true;
            break;
          }
          if ((w_new - ww).lpNorm<Eigen::Infinity>() < 1e-16) break;
          step *= 0.5;
        }
      }
      if (!accepted) break;  // line search stall: let the outer loop react

      VecX g_new(nw);
      eval_grad(w_new, g_new);
      const VecX sv = w_new - ww, yv = g_new - g;
      const double sy = sv.dot(yv);
      if (sy > 1e-10 * sv.norm() * yv.norm()) {
        mem.emplace_back(sv, yv);
        if (static_cast<int>(mem.size()) > opt.lbfgs_memory) mem.pop_front();
      }
      ww = w_new;
      fval = f_new;
      g = g_new;
      pg = projected_gradient_norm(ww, g);
      ++it;
    }
    iters_out = it;
    // make sure cached constraint values match the final iterate
    fval = eval_value(ww);
    return pg;
  };

  double omega = 1e-1;           // inner tolerance, tightened as progress is made
  double eta = -1.0;             // acceptable violation, set after the first solve
  double prev_viol = std::numeric_limits<double>::infinity();
  sol.status = SolveStatus::IterationLimit;

  for (int outer = 0; outer < opt.max_outer_iterations; ++outer) {
    int inner_iters = 0;
    const double pg = inner_minimize(w, omega, opt.inner_iteration_budget, inner_iters);
    al.eval_constraints(w.head(n));
    const double viol = al.residual_unscaled_inf(w);
    const double obj = p.cost(w.head(n));

    sol.log.push_back({outer, obj, viol, al.rho, pg, inner_iters});
    if (eta < 0.0) eta = std::max(10.0 * opt.constraint_tol, 0.3 * viol);

    if (viol <= opt.constraint_tol && pg <= opt.optimality_tol) {
      sol.status = SolveStatus::Converged;
      break;
    }
    if (elapsed() > opt.time_limit_s) {
      sol.status = SolveStatus::TimeLimit;
      break;
    }
    if (!w.allFinite()) {
      sol.status = SolveStatus::Diverged;
      sol.diagnostic = "iterate became non-finite";
      break;
    }

    // Progress rule: any violation increase forces penalty growth, so the
    // logged violation sequence is non-increasing wherever rho stays put.
    // Once feasibility is already below tolerance the penalty is frozen and
    // the multipliers polish stationarity.
    if (viol <= opt.constraint_tol ||
        (viol <= std::max(eta, opt.constraint_tol) && viol <= prev_viol * (1.0 + 1e-12))) {
      al.update_multipliers(w);
      eta = std::max(0.3 * eta, 0.3 * opt.constraint_tol);
      omega = std::max(0.3 * omega, 0.3 * opt.optimality_tol);
    } else if (al.rho < 1e12) {
      al.rho *= opt.penalty_growth;
      omega = std::max(0.5 * omega, 0.3 * opt.optimality_tol);
    } else {
      al.update_multipliers(w);  // penalty capped: fall back to multiplier steps
    }
    prev_viol = viol;
  }

  sol.z = w.head(n);
  sol.objective = p.cost(sol.z);
  sol.max_violation = max_violation(p, sol.z);
  sol.stationarity = sol.log.empty() ? 0.0 : sol.log.back().stationarity;

  if (!opt.iteration_log_path.empty()) {
    std::ofstream out(opt.iteration_log_path);
    out.precision(17);
    out << "iter,objective,violation,penalty,stationarity,inner_iterations\n";
    for (const auto& r : sol.log)
      out << r.iter << "," << r.objective << "," << r.violation << "," << r.penalty << ","
          << r.stationarity << "," << r.inner_iterations << "\n";
  }
  return sol;
}

// Central finite differences against the analytic Jacobians and gradient,
// reported per labeled block, worst offender first.
struct DerivativeCheckEntry {
  std::string block;
  double max_rel_error = 0.0;
  int row = -1, col = -1;
};

struct DerivativeReport {
  std::vector<DerivativeCheckEntry> entries;  // sorted by error, descending
  double worst() const { return entries.empty() ? 0.0 : entries.front().max_rel_error; }
};

inline DerivativeReport check_derivatives(const NlpProblem& p, const VecX& z) {
  const int n = p.num_vars;
  auto blocks_of = [](const std::vector<BlockLabel>& labels, int rows, const std::string& fallback) {
    std::vector<BlockLabel> out = labels;
    if (out.empty() && rows > 0) out.push_back({fallback, 0, rows});
    return out;
  };

  MatX fd_eq = MatX::Zero(p.num_eq, n), fd_in = MatX::Zero(p.num_ineq, n);
  VecX fd_grad(n);
  VecX hp(p.num_eq), hm(p.num_eq), gp(p.num_ineq), gm(p.num_ineq);
  for (int i = 0; i < n; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(z[i]));
    VecX zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    if (p.num_eq > 0) {
      p.eq(zp, hp);
      p.eq(zm, hm);
      fd_eq.col(i) = (hp - hm) / (2 * h);
    }
    if (p.num_ineq > 0) {
      p.ineq(zp, gp);
      p.ineq(zm, gm);
      fd_in.col(i) = (gp - gm) / (2 * h);
    }
    fd_grad[i] = (p.cost(zp) - p.cost(zm)) / (2 * h);
  }

  VecX je(p.eq_pattern.nnz()), ji(p.ineq_pattern.nnz()), an_grad(n);
  if (p.num_eq > 0) p.eq_jac(z, je);
  if (p.num_ineq > 0) p.ineq_jac(z, ji);
  p.cost_grad(z, an_grad);
  const MatX an_eq = dense_jacobian(p.eq_pattern, je);
  const MatX an_in = dense_jacobian(p.ineq_pattern, ji);

  DerivativeReport report;
  auto scan = [&](const MatX& fd, const MatX& an, const std::vector<BlockLabel>& blocks) {
    for (const auto& b : blocks) {
      DerivativeCheckEntry e;
      e.block = b.name;
      for (int r = b.begin; r < b.end; ++r)
        for (int c = 0; c < n; ++c) {
          const double err = std::abs(fd(r, c) - an(r, c)) /
                             std::max({1.0, std::abs(fd(r, c)), std::abs(an(r, c))});
          if (err > e.max_rel_error) {
            e.max_rel_error = err;
            e.row = r;
            e.col = c;
          }
        }
      report.entries.push_back(e);
    }
  };
  scan(fd_eq, an_eq, blocks_of(p.eq_blocks, p.num_eq, "eq"));
  scan(fd_in, an_in, blocks_of(p.ineq_blocks, p.num_ineq, "ineq"));
  {
    DerivativeCheckEntry e;
    e.block = "cost";
    for (int c = 0; c < n; ++c) {
      const double err = std::abs(fd_grad[c] - an_grad[c]) /
                         std::max({1.0, std::abs(fd_grad[c]), std::abs(an_grad[c])});
      if (err > e.max_rel_error) {
        e.max_rel_error = err;
        e.col = c;
      }
    }
    report.entries.push_back(e);
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const auto& a, const auto& b) { return a.max_rel_error > b.max_rel_error; });
  return report;
}

}  // namespace tt
