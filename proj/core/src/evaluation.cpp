#include "tsgdr/lthd/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "tsgdr/error.hpp"
#include "tsgdr/logging.hpp"
#include "tsgdr/parallel.hpp"

namespace tsgdr::lthd {

SecondStageSolution solve_second_stage(const model::GridCase& grid,
                                       const scenario::ScenarioPath& path,
                                       const Eigen::MatrixXd& targets,
                                       const SecondStageOptions& options,
                                       const std::string& dump_name) {
  const auto problem = build_second_stage(grid, path, targets, options.build);
  if (!options.dump_dir.empty()) {
    std::filesystem::create_directories(options.dump_dir);
    std::ofstream out(options.dump_dir / (dump_name + ".lp"));
    if (!out) throw Error("cannot write " + (options.dump_dir / (dump_name + ".lp")).string());
    lp::write_lp_format(problem.lp, out);
  }
  const auto result = lp::solve(problem.lp, options.solver);
  SecondStageSolution sol;
  sol.status = result.status;
  if (!result.optimal()) {
    log::warn("second-stage solve for " + dump_name + " ended " + lp::to_string(result.status));
    return sol;
  }
  sol.ok = true;
  sol.cost = result.objective;
  sol.lambda = extract_duals(problem, result);
  sol.volumes = problem.hydro_values(result.x, &StageVars::volume);
  const auto plus = problem.hydro_values(result.x, &StageVars::dev_plus);
  const auto minus = problem.hydro_values(result.x, &StageVars::dev_minus);
  sol.deviation = plus.sum() + minus.sum();
  return sol;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return {mean, sd};
}

EvalSummary evaluate_policy_cost(const model::GridCase& grid,
                                 const std::vector<scenario::ScenarioPath>& paths,
                                 const TargetPolicy& policy, const EvalOptions& options) {
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  EvalSummary summary;
  summary.costs.assign(paths.size(), nan);
  summary.deviations.assign(paths.size(), nan);
  std::vector<double> seconds(paths.size(), 0.0);
  parallel_for(paths.size(), options.workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::MatrixXd targets = policy(paths[i]);
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto sol = solve_second_stage(grid, paths[i], targets, options.second_stage,
                                        "eval_" + std::to_string(i));
    if (sol.ok) {
      summary.costs[i] = sol.cost;
      summary.deviations[i] = sol.deviation;
    }
  });
  for (std::size_t i = 0; i < paths.size(); ++i) {
    summary.policy_seconds += seconds[i];
    summary.decisions += static_cast<std::size_t>(paths[i].horizon());
    if (std::isnan(summary.costs[i]))
      ++summary.n_failed;
    else
      summary.max_deviation = std::max(summary.max_deviation, summary.deviations[i]);
  }
  std::tie(summary.mean_cost, summary.std_cost) = mean_std(summary.costs);
  return summary;
}

}  // namespace tsgdr::lthd
