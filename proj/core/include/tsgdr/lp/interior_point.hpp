#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/lp/linear_program.hpp"

namespace tsgdr::lp {

enum class SolveStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(SolveStatus status);

/// Relative KKT residuals:
///   primal = max violation of rows and bounds / (1 + |data|_inf)
///   dual   = |c - A_eq'y - A_in'w - z_l + z_u|_inf plus sign violations,
///            over (1 + |c|_inf)
///   gap    = |primal objective - dual objective| / (1 + |primal objective|)
struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;

  double max() const;
};

/// Duals follow d(optimal objective)/d(rhs) = dual, for both equality rows
/// (y_eq, free sign) and >= rows (y_in >= 0). Bound duals are nonnegative.
struct SolveResult {
  SolveStatus status = SolveStatus::iteration_limit;
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;
  double objective = 0.0;
  double dual_objective = 0.0;
  KktResiduals kkt;
  int iterations = 0;
  /// Average complementarity product per iteration.
  std::vector<double> mu_trace;
  /// True when the returned point comes from the active-set polish.
  bool polished = false;

  bool optimal() const { return status == SolveStatus::optimal; }
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 200;
  /// Re-solve the equality systems on the active set guessed by the interior
  /// point to land exactly on the optimal face.
  bool polish = true;
};

/// Mehrotra predictor-corrector primal-dual interior point method on the
/// regularized (quasi-definite) augmented system. Reentrant.
SolveResult solve(const LinearProgram& lp, const SolverOptions& options = {});

inline SolveResult solve(const LinearProgram& lp, double tol, int max_iter) {
  return solve(lp, SolverOptions{tol, max_iter, true});
}

/// Recomputes the residuals of `result` on `lp` from scratch.
KktResiduals check_kkt(const LinearProgram& lp, const SolveResult& result);

/// Equality duals of the rows carrying `tags`, in the order given. Throws
/// ValidationError for unknown tags or a non-optimal result.
std::vector<double> rhs_sensitivity(const LinearProgram& lp, const SolveResult& result,
                                    const std::vector<std::string>& tags);

}  // namespace tsgdr::lp
