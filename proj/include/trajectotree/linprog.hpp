#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "trajectotree/core.hpp"

namespace tt {

// Dense linear program, minimization convention:
//   min c'v  s.t.  A_eq v = b_eq,  A_in v <= b_in,  lb <= v <= ub.
// Infinite bounds are encoded as +-kLpInf. Problems here are tiny (tens of
// variables), so everything is dense.
inline constexpr double kLpInf = 1e30;

struct LinearProgram {
  VecX c;
  MatX A_eq;
  VecX b_eq;
  MatX A_in;
  VecX b_in;
  VecX lb, ub;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  VecX x;
  double objective = 0.0;
};

namespace detail {

// Two-phase primal simplex on the standard form min c'x, Ax = b, x >= 0.
// Bland's rule throughout; tolerances sized for the ~1e-9 accuracy contract.
struct Simplex {
  static constexpr double kRcTol = 1e-9;
  static constexpr double kPivTol = 1e-11;

  MatX T;                 // m x (n+1) canonical tableau, RHS in last column
  VecX obj;               // n+1 reduced-cost row (last entry: -objective)
  std::vector<int> basis;
  std::vector<bool> banned;  // artificial columns excluded from entering
  int m = 0, n = 0;

  void pivot(int row, int col) {
    T.row(row) /= T(row, col);
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      const double f = T(i, col);
      if (f != 0.0) T.row(i) -= f * T.row(row);
    }
    const double f = obj[col];
    if (f != 0.0) obj -= f * T.row(row).transpose();
    basis[row] = col;
  }

  void rebuild_objective(const VecX& cost) {
    obj.setZero(n + 1);
    obj.head(n) = cost;
    for (int i = 0; i < m; ++i) {
      const double cb = cost[basis[i]];
      if (cb != 0.0) obj -= cb * T.row(i).transpose();
    }
  }

  // Returns false on unboundedness.
  bool iterate() {
    for (;;) {
      int enter = -1;
      for (int j = 0; j < n; ++j) {
        if (banned[j]) continue;
        if (obj[j] < -kRcTol) {
          enter = j;
          break;  // Bland: first eligible index
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (T(i, enter) > kPivTol) {
          const double ratio = T(i, n) / T(i, enter);
          if (ratio < best - 1e-12 || (ratio < best + 1e-12 && (leave < 0 || basis[i] < basis[leave]))) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }
};

}  // namespace detail

inline LpSolution lp_solve(const LinearProgram& lp) {
  const int nv = static_cast<int>(lp.c.size());
  const int me = static_cast<int>(lp.b_eq.size());
  const int mi = static_cast<int>(lp.b_in.size());
  if ((me > 0 && lp.A_eq.cols() != nv) || (mi > 0 && lp.A_in.cols() != nv) ||
      lp.lb.size() != nv || lp.ub.size() != nv || lp.A_eq.rows() != me || lp.A_in.rows() != mi)
    throw std::invalid_argument("lp_solve: inconsistent dimensions");
  if (!lp.c.allFinite() || (me > 0 && !(lp.A_eq.allFinite() && lp.b_eq.allFinite())) ||
      (mi > 0 && !(lp.A_in.allFinite() && lp.b_in.allFinite())))
    throw std::invalid_argument("lp_solve: non-finite entries");

  // Map each variable to standard-form columns.
  struct VarMap {
    int col = -1, col_neg = -1;  // v = shift + sign*x[col] (+ x_pos - x_neg when free)
    double shift = 0.0, sign = 1.0;
  };
  std::vector<VarMap> vmap(nv);
  int ncols = 0;
  int extra_rows = 0;  // upper-bound rows for doubly-bounded variables
  for (int j = 0; j < nv; ++j) {
    const bool lo = lp.lb[j] > -kLpInf, hi = lp.ub[j] < kLpInf;
    if (lo) {
      vmap[j] = {ncols++, -1, lp.lb[j], 1.0};
      if (hi) ++extra_rows;
    } else if (hi) {
      vmap[j] = {ncols++, -1, lp.ub[j], -1.0};
    } else {
      vmap[j].col = ncols++;
      vmap[j].col_neg = ncols++;
    }
  }
  const int slack0 = ncols;
  const int mrows = me + mi + extra_rows;
  ncols += mi + extra_rows;          // slack per inequality row
  const int art0 = ncols;
  ncols += mrows;                    // artificial per row

  MatX A = MatX::Zero(mrows, ncols);
  VecX b = VecX::Zero(mrows);
  VecX cost = VecX::Zero(ncols);

  auto scatter_row = [&](int row, const Eigen::RowVectorXd& arow, double rhs) {
    double shift_acc = 0.0;
    for (int j = 0; j < nv; ++j) {
      const double a = arow[j];
      if (a == 0.0) continue;
      A(row, vmap[j].col) += a * vmap[j].sign;
      if (vmap[j].col_neg >= 0) A(row, vmap[j].col_neg) -= a;
      shift_acc += a * vmap[j].shift;
    }
    b[row] = rhs - shift_acc;
  };

  int row = 0;
  for (int i = 0; i < me; ++i, ++row) scatter_row(row, lp.A_eq.row(i), lp.b_eq[i]);
  for (int i = 0; i < mi; ++i, ++row) {
    scatter_row(row, lp.A_in.row(i), lp.b_in[i]);
    A(row, slack0 + i) = 1.0;
  }
  {
    int k = 0;
    for (int j = 0; j < nv; ++j) {
      if (lp.lb[j] > -kLpInf && lp.ub[j] < kLpInf) {
        A(row, vmap[j].col) = 1.0;
        A(row, slack0 + mi + k) = 1.0;
        b[row] = lp.ub[j] - lp.lb[j];
        ++row;
        ++k;
      }
    }
  }

  for (int j = 0; j < nv; ++j) {
    cost[vmap[j].col] += lp.c[j] * vmap[j].sign;
    if (vmap[j].col_neg >= 0) cost[vmap[j].col_neg] -= lp.c[j];
  }

  // Normalize RHS sign, then install the artificial basis.
  for (int i = 0; i < mrows; ++i) {
    if (b[i] < 0.0) {
      A.row(i) *= -1.0;
      b[i] = -b[i];
    }
    A(i, art0 + i) = 1.0;
  }

  detail::Simplex sx;
  sx.m = mrows;
  sx.n = ncols;
  sx.T.resize(mrows, ncols + 1);
  sx.T.leftCols(ncols) = A;
  sx.T.col(ncols) = b;
  sx.basis.resize(mrows);
  sx.banned.assign(ncols, false);
  for (int i = 0; i < mrows; ++i) sx.basis[i] = art0 + i;

  // Phase 1: minimize the artificial sum.
  VecX phase1 = VecX::Zero(ncols);
  phase1.segment(art0, mrows).setOnes();
  sx.rebuild_objective(phase1);
  sx.iterate();  // bounded by construction
  if (-sx.obj[ncols] > 1e-9) return {LpStatus::Infeasible, VecX(), 0.0};

  // Drive leftover artificials out of the basis, then ban them.
  for (int i = 0; i < mrows; ++i) {
    if (sx.basis[i] >= art0) {
      int col = -1;
      for (int j = 0; j < art0; ++j) {
        if (std::abs(sx.T(i, j)) > detail::Simplex::kPivTol) {
          col = j;
          break;
        }
      }
      if (col >= 0) sx.pivot(i, col);
    }
  }
  for (int j = art0; j < ncols; ++j) sx.banned[j] = true;

  // Phase 2.
  sx.rebuild_objective(cost);
  if (!sx.iterate()) return {LpStatus::Unbounded, VecX(), 0.0};

  VecX xstd = VecX::Zero(ncols);
  for (int i = 0; i < mrows; ++i) xstd[sx.basis[i]] = sx.T(i, ncols);
  VecX v(nv);
  for (int j = 0; j < nv; ++j) {
    double val = vmap[j].shift + vmap[j].sign * xstd[vmap[j].col];
    if (vmap[j].col_neg >= 0) val -= xstd[vmap[j].col_neg];
    v[j] = val;
  }
  return {LpStatus::Optimal, v, lp.c.dot(v)};
}

}  // namespace tt
