#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/lp/interior_point.hpp"
#include "tsgdr/lp/linear_program.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"

namespace tsgdr::lthd {

using Eigen::Index;

struct BuildOptions {
  /// Target-deviation penalty in USD/hm3; default_penalty() when unset.
  std::optional<double> penalty;
  /// Tangent cuts per branch for the quadratic loss term.
  int loss_cuts = 11;
  /// Spill cost in USD/hm3; breaks spill/storage ties.
  double spill_cost = 1e-4;
};

/// 10x the most valuable use of one hm3 of water: the highest marginal cost
/// times the energy that volume yields through the rest of its cascade.
double default_penalty(const model::GridCase& grid);

/// Local rows of the DCLL model for one branch and stage, over the local
/// variable order (f_ij, f_ji, theta_i, theta_j), i = from bus, j = to bus.
struct DcllRows {
  std::array<double, 4> ohm;  // ohm . vars = 0
  std::vector<std::array<double, 4>> loss_cuts;  // cut . vars >= loss_rhs[k]
  std::vector<double> loss_rhs;
  double flow_limit = 0.0;  // |f_ij|, |f_ji| <= flow_limit
};

/// f_ij = b (theta_j - theta_i) and K tangents of f_ij + f_ji >= alpha f_ij^2
/// at points spread evenly over [-limit, limit] (the single point 0 when K = 1).
DcllRows dcll_block(const model::Branch& branch, int loss_cuts);

/// Column indices of one stage. Unused entries are -1.
struct StageVars {
  std::vector<Index> volume, turbine, spill, dev_plus, dev_minus;  // per hydro
  std::vector<Index> generation;                                   // per generator
  std::vector<Index> angle;                                        // per bus
  std::vector<std::array<Index, 2>> flow;                          // per branch: from, to side
  std::vector<Index> water_rows;  // equality rows of the hydro balance
  std::vector<Index> power_rows;  // equality rows of the nodal balance
};

/// Previous-stage volumes: either constants (stage 1) or columns.
struct PreviousVolume {
  Eigen::VectorXd constant;
  std::vector<Index> columns;  // empty means use `constant`
};

/// Appends stage t (1-based) of the dispatch model to `lp`: variables,
/// water balance, production coupling and the DCLL network. Target rows are
/// not added here.
StageVars add_stage(lp::LpBuilder& lp, const model::GridCase& grid, int t,
                    const Eigen::VectorXd& inflow, const PreviousVolume& previous,
                    const BuildOptions& options);

struct MultiPeriodProblem {
  lp::LinearProgram lp;
  int horizon = 0;
  std::size_t n_hydros = 0;
  double penalty = 0.0;
  /// target_rows[t][j]: tag of the row x_jt + d+_jt - d-_jt = target_jt.
  std::vector<std::vector<std::string>> target_rows;
  std::vector<std::vector<Index>> target_row_index;
  std::vector<StageVars> stages;

  /// Solution values of a per-stage, per-hydro column family as T x n_hydros.
  Eigen::MatrixXd hydro_values(const Eigen::VectorXd& x,
                               std::vector<Index> StageVars::*family) const;
};

/// The second-stage deterministic multi-period LP Q(w, targets). Any finite
/// target matrix yields a feasible program. `targets` is T x n_hydros with T
/// equal to the path horizon, which must not exceed the case horizon.
MultiPeriodProblem build_second_stage(const model::GridCase& grid,
                                      const scenario::ScenarioPath& path,
                                      const Eigen::MatrixXd& targets,
                                      const BuildOptions& options = {});

/// Same dispatch model without target rows: the perfect-information optimum
/// for one path.
MultiPeriodProblem build_extensive_form(const model::GridCase& grid,
                                        const scenario::ScenarioPath& path,
                                        const BuildOptions& options = {});

/// Target duals lambda (T x n_hydros, USD/hm3): d Q / d target. Throws
/// ValidationError on a non-optimal result.
Eigen::MatrixXd extract_duals(const MultiPeriodProblem& problem, const lp::SolveResult& result);

}  // namespace tsgdr::lthd
