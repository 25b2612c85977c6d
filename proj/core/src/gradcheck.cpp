#include "tsgdr/train/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsgdr/random.hpp"

namespace tsgdr::train {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

GradcheckReport gradcheck(const model::GridCase& grid, const scenario::ScenarioPath& path,
                          const policy::PolicyParams& params, const GradcheckOptions& options,
                          const MatrixXd* lambda_override) {
  const auto v0 = grid.v0();
  const VectorXd x0 = Eigen::Map<const VectorXd>(v0.data(), static_cast<Index>(v0.size()));
  auto solve = [&](const policy::PolicyParams& p) {
    return lthd::solve_second_stage(grid, path, policy::rollout(p, path, x0).targets,
                                    options.second_stage, "gradcheck");
  };

  GradcheckReport report;
  const auto forward = policy::rollout(params, path, x0);
  const auto base = solve(params);
  if (!base.ok) {
    report.n_failed_solves = 1;
    return report;
  }
  report.cost = base.cost;
  const MatrixXd& lambda = lambda_override ? *lambda_override : base.lambda;
  const VectorXd analytic = policy::vjp(params, forward, path, x0, lambda);

  std::vector<Index> coords(static_cast<std::size_t>(params.theta.size()));
  std::iota(coords.begin(), coords.end(), Index{0});
  if (options.n_coords < coords.size()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.n_coords; ++i)
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    coords.resize(options.n_coords);
  }

  const double jump = options.jump_tolerance * std::max(1.0, base.lambda.cwiseAbs().maxCoeff());
  const double floor = options.noise * std::abs(base.cost) / options.step;
  std::size_t considered = 0, passed = 0;
  for (Index k : coords) {
    CoordinateCheck c;
    c.coordinate = k;
    c.analytic = analytic(k);
    auto up = params, down = params;
    up.theta(k) += options.step;
    down.theta(k) -= options.step;
    const auto su = solve(up);
    const auto sd = solve(down);
    if (!su.ok || !sd.ok) {
      ++report.n_failed_solves;
      report.coordinates.push_back(c);
      ++considered;
      continue;
    }
    c.finite_difference = (su.cost - sd.cost) / (2.0 * options.step);
    c.kink = (su.lambda - base.lambda).cwiseAbs().maxCoeff() > jump ||
             (sd.lambda - base.lambda).cwiseAbs().maxCoeff() > jump;
    const double diff = std::abs(c.analytic - c.finite_difference);
    const double scale = std::max(std::abs(c.analytic), std::abs(c.finite_difference));
    c.relative_error = scale > 0.0 ? diff / scale : 0.0;
    c.pass = diff <= options.tolerance * scale + floor;
    if (c.kink) {
      ++report.n_kink;
    } else {
      ++considered;
      if (c.pass) ++passed;
    }
    report.coordinates.push_back(c);
  }
  report.pass_rate = considered > 0 ? static_cast<double>(passed) / static_cast<double>(considered) : 1.0;
  return report;
}

}  // namespace tsgdr::train
