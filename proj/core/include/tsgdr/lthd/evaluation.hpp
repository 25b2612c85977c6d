#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/lp/interior_point.hpp"
#include "tsgdr/lthd/second_stage.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"

namespace tsgdr::lthd {

/// Maps an inflow path to a T x n_hydros target matrix.
using TargetPolicy = std::function<Eigen::MatrixXd(const scenario::ScenarioPath&)>;

struct SecondStageOptions {
  BuildOptions build;
  lp::SolverOptions solver;
  /// When set, every built LP is written there in LP text format.
  std::filesystem::path dump_dir;
};

struct SecondStageSolution {
  bool ok = false;
  lp::SolveStatus status = lp::SolveStatus::iteration_limit;
  double cost = 0.0;       // Q(w, targets)
  double deviation = 0.0;  // sum of |x - target|, hm3
  Eigen::MatrixXd lambda;  // T x n_hydros, empty unless ok
  Eigen::MatrixXd volumes;
};

/// Builds and solves Q(w, targets) for one path. `dump_name` names the LP
/// file when options.dump_dir is set.
SecondStageSolution solve_second_stage(const model::GridCase& grid,
                                       const scenario::ScenarioPath& path,
                                       const Eigen::MatrixXd& targets,
                                       const SecondStageOptions& options = {},
                                       const std::string& dump_name = "second_stage");

struct EvalOptions {
  SecondStageOptions second_stage;
  int workers = 1;
};

struct EvalSummary {
  double mean_cost = 0.0;
  double std_cost = 0.0;       // sample standard deviation over solved paths
  double max_deviation = 0.0;  // max over paths of sum |delta|
  std::size_t n_failed = 0;
  std::vector<double> costs;   // per path, NaN where the solve failed
  std::vector<double> deviations;
  double policy_seconds = 0.0;  // time spent inside the policy
  std::size_t decisions = 0;    // stages x solved-or-not paths
};

/// Rolls `policy` out on every path and solves the second stage. Failed solves
/// are counted and excluded from the statistics.
EvalSummary evaluate_policy_cost(const model::GridCase& grid,
                                 const std::vector<scenario::ScenarioPath>& paths,
                                 const TargetPolicy& policy, const EvalOptions& options = {});

/// Mean and sample standard deviation of the finite entries.
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace tsgdr::lthd
