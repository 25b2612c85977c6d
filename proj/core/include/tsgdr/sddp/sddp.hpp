#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/lp/interior_point.hpp"
#include "tsgdr/lthd/second_stage.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"

namespace tsgdr::sddp {

/// alpha_t >= intercept + slope . x_t, an under-estimator of the expected
/// cost-to-go after stage t as a function of the stage-t end volumes.
struct Cut {
  int stage = 0;
  double intercept = 0.0;
  Eigen::VectorXd slope;

  double value(const Eigen::VectorXd& x) const { return intercept + slope.dot(x); }
};

struct SddpOptions {
  int iterations = 50;
  std::uint64_t seed = 0;
  int workers = 1;
  lthd::BuildOptions build;
  lp::SolverOptions solver;
  /// Stabilization report: relative bound change below this over `window`
  /// iterations.
  double stable_tolerance = 1e-4;
  int stable_window = 10;
};

struct SddpState {
  int horizon = 0;
  std::size_t n_hydros = 0;
  /// cuts[t - 1]: pool bounding the cost-to-go after stage t (empty at T).
  std::vector<std::vector<Cut>> cuts;
  std::vector<double> lower_bounds;
  int iterations = 0;
  std::uint64_t seed = 0;
  int stable_at = -1;  // first iteration where the bound stabilized, -1 if never
  double seconds = 0.0;
  std::size_t stage_solves = 0;
};

struct StageSolution {
  bool ok = false;
  lp::SolveStatus status = lp::SolveStatus::iteration_limit;
  double objective = 0.0;       // immediate cost + cost-to-go estimate
  double immediate_cost = 0.0;
  Eigen::VectorXd volumes;      // end-of-stage volumes
  Eigen::VectorXd slope;        // d objective / d x_in
};

/// One stage of the dispatch model with incoming volumes fixed by copy rows
/// and an epigraph variable (>= 0, costs are nonnegative) over `cuts`.
StageSolution stage_solve(const model::GridCase& grid, int t, const Eigen::VectorXd& x_in,
                          const Eigen::VectorXd& inflow, const std::vector<Cut>& cuts,
                          const SddpOptions& options = {});

/// Single-cut SDDP on a stagewise-independent lattice. Throws ValidationError
/// for historical sets and Error when the lower bound decreases.
SddpState sddp_train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                     const SddpOptions& options = {});

/// Solves the stage-1 problem against the current cuts.
double lower_bound(const SddpState& state, const model::GridCase& grid,
                   const scenario::ScenarioSet& set, const SddpOptions& options = {});

struct SimulationSummary {
  double mean_cost = 0.0;
  double std_cost = 0.0;
  std::vector<double> costs;  // NaN where a stage solve failed
  std::size_t n_failed = 0;
  std::size_t stage_solves = 0;
  double solve_seconds = 0.0;  // wall clock inside stage solves

  double seconds_per_decision() const {
    return stage_solves > 0 ? solve_seconds / static_cast<double>(stage_solves) : 0.0;
  }
};

/// Runs the cut-based policy on fixed paths, one stage LP per stage.
SimulationSummary simulate(const SddpState& state, const model::GridCase& grid,
                           const std::vector<scenario::ScenarioPath>& paths,
                           const SddpOptions& options = {});

std::string dump_sddp_report(const SddpState& state, const SimulationSummary* simulation = nullptr);
void write_cuts_csv(const SddpState& state, const std::filesystem::path& path);

}  // namespace tsgdr::sddp
