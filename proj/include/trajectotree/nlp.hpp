#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trajectotree/core.hpp"

namespace tt {

// Fixed sparsity: parallel (row, col) arrays; evaluators fill a value array of
// the same length, never changing the pattern.
struct SparsityPattern {
  int rows = 0, cols = 0;
  std::vector<int> row, col;

  int nnz() const { return static_cast<int>(row.size()); }
  void add(int r, int c) {
    row.push_back(r);
    col.push_back(c);
  }
};

struct BlockLabel {
  std::string name;
  int begin = 0, end = 0;  // row range [begin, end)
};

// Smooth NLP with first derivatives:
//   min f(z)  s.t.  eq(z) = 0,  ineq(z) >= 0,  lb <= z <= ub.
struct NlpProblem {
  int num_vars = 0;
  VecX lb, ub;

  std::function<double(const VecX&)> cost;
  std::function<void(const VecX&, VecX&)> cost_grad;

  int num_eq = 0, num_ineq = 0;
  std::function<void(const VecX&, VecX&)> eq;
  std::function<void(const VecX&, VecX&)> ineq;
  SparsityPattern eq_pattern, ineq_pattern;
  std::function<void(const VecX&, VecX&)> eq_jac;    // values aligned with eq_pattern
  std::function<void(const VecX&, VecX&)> ineq_jac;  // values aligned with ineq_pattern

  std::vector<BlockLabel> eq_blocks, ineq_blocks;
};

// True constraint violation (not the solver's internal residual).
inline double max_violation(const NlpProblem& p, const VecX& z) {
  double v = 0.0;
  if (p.num_eq > 0) {
    VecX h(p.num_eq);
    p.eq(z, h);
    v = h.cwiseAbs().maxCoeff();
  }
  if (p.num_ineq > 0) {
    VecX g(p.num_ineq);
    p.ineq(z, g);
    v = std::max(v, std::max(0.0, -g.minCoeff()));
  }
  for (int i = 0; i < p.num_vars; ++i) {
    v = std::max(v, p.lb[i] - z[i]);
    v = std::max(v, z[i] - p.ub[i]);
  }
  return v;
}

inline MatX dense_jacobian(const SparsityPattern& pat, const VecX& vals) {
  MatX J = MatX::Zero(pat.rows, pat.cols);
  for (int t = 0; t < pat.nnz(); ++t) J(pat.row[t], pat.col[t]) += vals[t];
  return J;
}

}  // namespace tt
