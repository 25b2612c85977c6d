#include "tsgdr/lthd/second_stage.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tsgdr/error.hpp"
#include "tsgdr/logging.hpp"

namespace tsgdr::lthd {

using lp::kInf;
using lp::Term;

double default_penalty(const model::GridCase& grid) {
  const std::size_t n = grid.n_hydros();
  // hydro k releases into turbine_next[k] / spill_next[k]
  std::vector<int> turbine_next(n, -1), spill_next(n, -1);
  for (std::size_t j = 0; j < n; ++j) {
    for (int k : grid.hydros[j].upstream_turbine) turbine_next[static_cast<std::size_t>(k)] = static_cast<int>(j);
    for (int k : grid.hydros[j].upstream_spill) spill_next[static_cast<std::size_t>(k)] = static_cast<int>(j);
  }
  std::vector<double> energy(n, -1.0);  // MWh per hm3 along the best downstream route
  std::function<double(int)> route = [&](int j) -> double {
    if (j < 0) return 0.0;
    auto& e = energy[static_cast<std::size_t>(j)];
    if (e >= 0.0) return e;
    const double own = 1.0 / grid.hydros[static_cast<std::size_t>(j)].production_factor;
    e = std::max(own + route(turbine_next[static_cast<std::size_t>(j)]),
                 route(spill_next[static_cast<std::size_t>(j)]));
    return e;
  };
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, route(static_cast<int>(j)));
  const double cost = std::max(grid.max_marginal_cost(), 1.0);
  return 10.0 * cost * std::max(worst, 1.0);
}

DcllRows dcll_block(const model::Branch& branch, int loss_cuts) {
  if (loss_cuts < 1) throw ValidationError("dcll_block: needs at least one loss cut");
  DcllRows rows;
  // f_ij - b (theta_j - theta_i) = 0
  rows.ohm = {1.0, 0.0, -branch.b, branch.b};
  const double alpha = branch.loss_coefficient();
  const double s = branch.limit;
  for (int k = 0; k < loss_cuts; ++k) {
    const double point = loss_cuts == 1 ? 0.0 : -s + 2.0 * s * k / (loss_cuts - 1);
    // f_ij + f_ji >= alpha (2 point f_ij - point^2)
    rows.loss_cuts.push_back({1.0 - 2.0 * alpha * point, 1.0, 0.0, 0.0});
    rows.loss_rhs.push_back(-alpha * point * point);
  }
  rows.flow_limit = s;
  return rows;
}

StageVars add_stage(lp::LpBuilder& lp, const model::GridCase& grid, int t,
                    const Eigen::VectorXd& inflow, const PreviousVolume& previous,
                    const BuildOptions& options) {
  if (t < 1 || t > grid.horizon)
    throw DimensionError("stage " + std::to_string(t) + " outside the case horizon");
  const std::size_t nh = grid.n_hydros();
  if (static_cast<std::size_t>(inflow.size()) != nh)
    throw DimensionError("stage inflow length != number of hydros");
  if (previous.columns.empty() ? static_cast<std::size_t>(previous.constant.size()) != nh
                               : previous.columns.size() != nh)
    throw DimensionError("previous volume length != number of hydros");
  const auto ti = static_cast<std::size_t>(t - 1);
  const double hours = grid.stage_hours;
  const std::string st = std::to_string(t);
  StageVars v;

  for (const auto& g : grid.generators)
    v.generation.push_back(lp.add_variable(g.p_min, g.p_max, g.cost[ti] * hours,
                                           "p_" + st + "_" + std::to_string(g.id)));
  for (std::size_t j = 0; j < nh; ++j) {
    const auto& h = grid.hydros[j];
    const std::string sj = st + "_" + std::to_string(j);
    v.volume.push_back(lp.add_variable(h.v_min, h.v_max, 0.0, "x_" + sj));
    v.turbine.push_back(lp.add_variable(0.0, kInf, 0.0, "u_" + sj));
    v.spill.push_back(lp.add_variable(0.0, kInf, options.spill_cost, "s_" + sj));
  }
  v.dev_plus.assign(nh, -1);
  v.dev_minus.assign(nh, -1);
  for (const auto& bus : grid.buses) {
    const bool ref = bus.id == grid.reference_bus;
    v.angle.push_back(lp.add_variable(ref ? 0.0 : -kInf, ref ? 0.0 : kInf, 0.0,
                                      "theta_" + st + "_" + std::to_string(bus.id)));
  }
  for (std::size_t e = 0; e < grid.branches.size(); ++e) {
    const double s = grid.branches[e].limit;
    const std::string se = st + "_" + std::to_string(e);
    v.flow.push_back({lp.add_variable(-s, s, 0.0, "fij_" + se),
                      lp.add_variable(-s, s, 0.0, "fji_" + se)});
  }

  for (std::size_t j = 0; j < nh; ++j) {
    const auto& h = grid.hydros[j];
    std::vector<Term> terms{{v.volume[j], 1.0}, {v.turbine[j], 1.0}, {v.spill[j], 1.0}};
    for (int k : h.upstream_turbine) terms.emplace_back(v.turbine[static_cast<std::size_t>(k)], -1.0);
    for (int k : h.upstream_spill) terms.emplace_back(v.spill[static_cast<std::size_t>(k)], -1.0);
    double rhs = inflow(static_cast<Index>(j));
    if (previous.columns.empty())
      rhs += previous.constant(static_cast<Index>(j));
    else
      terms.emplace_back(previous.columns[j], -1.0);
    v.water_rows.push_back(lp.add_eq_row(terms, rhs));
    const auto gen = grid.generator_index(h.generator);
    lp.add_eq_row({{v.turbine[j], 1.0}, {v.generation[gen], -h.production_factor * hours}}, 0.0);
  }

  for (std::size_t e = 0; e < grid.branches.size(); ++e) {
    const auto& br = grid.branches[e];
    const auto rows = dcll_block(br, options.loss_cuts);
    const std::array<Index, 4> local{v.flow[e][0], v.flow[e][1], v.angle[grid.bus_index(br.from_bus)],
                                     v.angle[grid.bus_index(br.to_bus)]};
    auto terms = [&](const std::array<double, 4>& coef) {
      std::vector<Term> out;
      for (std::size_t k = 0; k < 4; ++k)
        if (coef[k] != 0.0) out.emplace_back(local[k], coef[k]);
      return out;
    };
    lp.add_eq_row(terms(rows.ohm), 0.0);
    for (std::size_t k = 0; k < rows.loss_cuts.size(); ++k)
      lp.add_ge_row(terms(rows.loss_cuts[k]), rows.loss_rhs[k]);
  }

  std::vector<std::vector<Term>> balance(grid.buses.size());
  for (std::size_t g = 0; g < grid.generators.size(); ++g)
    balance[grid.bus_index(grid.generators[g].bus)].emplace_back(v.generation[g], 1.0);
  for (std::size_t e = 0; e < grid.branches.size(); ++e) {
    const auto& br = grid.branches[e];
    balance[grid.bus_index(br.from_bus)].emplace_back(v.flow[e][0], -1.0);
    balance[grid.bus_index(br.to_bus)].emplace_back(v.flow[e][1], -1.0);
  }
  for (std::size_t i = 0; i < grid.buses.size(); ++i)
    v.power_rows.push_back(lp.add_eq_row(balance[i], grid.buses[i].demand[ti]));
  return v;
}

Eigen::MatrixXd MultiPeriodProblem::hydro_values(const Eigen::VectorXd& x,
                                                 std::vector<Index> StageVars::*family) const {
  Eigen::MatrixXd out(horizon, static_cast<Index>(n_hydros));
  for (int t = 0; t < horizon; ++t)
    for (std::size_t j = 0; j < n_hydros; ++j) {
      const Index col = (stages[static_cast<std::size_t>(t)].*family)[j];
      out(t, static_cast<Index>(j)) = col >= 0 ? x(col) : 0.0;
    }
  return out;
}

namespace {

MultiPeriodProblem build(const model::GridCase& grid, const scenario::ScenarioPath& path,
                         const Eigen::MatrixXd* targets, const BuildOptions& options) {
  const int horizon = path.horizon();
  const std::size_t nh = grid.n_hydros();
  if (horizon < 1 || horizon > grid.horizon)
    throw DimensionError("path horizon " + std::to_string(horizon) + " exceeds case horizon " +
                         std::to_string(grid.horizon));
  if (static_cast<std::size_t>(path.inflows.cols()) != nh)
    throw DimensionError("path inflow columns != number of hydros");
  if (options.loss_cuts < 1) throw ValidationError("loss_cuts must be >= 1");

  MultiPeriodProblem problem;
  problem.horizon = horizon;
  problem.n_hydros = nh;
  if (targets) {
    if (targets->rows() != horizon || static_cast<std::size_t>(targets->cols()) != nh)
      throw DimensionError("targets must be " + std::to_string(horizon) + " x " + std::to_string(nh));
    if (!targets->allFinite()) throw ValidationError("targets must be finite");
    problem.penalty = options.penalty.value_or(default_penalty(grid));
    if (!(problem.penalty > 0.0) || !std::isfinite(problem.penalty))
      throw ValidationError("target penalty must be positive");
  }

  lp::LpBuilder b;
  PreviousVolume previous;
  previous.constant = Eigen::Map<const Eigen::VectorXd>(grid.v0().data(), static_cast<Index>(nh));
  for (int t = 1; t <= horizon; ++t) {
    const Eigen::VectorXd inflow = path.inflows.row(t - 1).transpose();
    auto stage = add_stage(b, grid, t, inflow, previous, options);
    if (targets) {
      std::vector<std::string> tags;
      std::vector<Index> rows;
      for (std::size_t j = 0; j < nh; ++j) {
        const auto& h = grid.hydros[j];
        const double target = (*targets)(t - 1, static_cast<Index>(j));
        if (target < 0.0 || target > 1.5 * h.v_max)
          log::debug("target outside [0, 1.5 vmax] at stage " + std::to_string(t) + ", hydro " +
                     std::to_string(j));
        const std::string sj = std::to_string(t) + "_" + std::to_string(j);
        stage.dev_plus[j] = b.add_variable(0.0, kInf, problem.penalty, "dp_" + sj);
        stage.dev_minus[j] = b.add_variable(0.0, kInf, problem.penalty, "dm_" + sj);
        std::string tag = "target:" + std::to_string(t) + ":" + std::to_string(j);
        rows.push_back(b.add_eq_row(
            {{stage.volume[j], 1.0}, {stage.dev_plus[j], 1.0}, {stage.dev_minus[j], -1.0}}, target, tag));
        tags.push_back(std::move(tag));
      }
      problem.target_rows.push_back(std::move(tags));
      problem.target_row_index.push_back(std::move(rows));
    }
    previous.columns = stage.volume;
    problem.stages.push_back(std::move(stage));
  }
  problem.lp = b.build();
  return problem;
}

}  // namespace

MultiPeriodProblem build_second_stage(const model::GridCase& grid, const scenario::ScenarioPath& path,
                                      const Eigen::MatrixXd& targets, const BuildOptions& options) {
  return build(grid, path, &targets, options);
}

MultiPeriodProblem build_extensive_form(const model::GridCase& grid, const scenario::ScenarioPath& path,
                                        const BuildOptions& options) {
  return build(grid, path, nullptr, options);
}

Eigen::MatrixXd extract_duals(const MultiPeriodProblem& problem, const lp::SolveResult& result) {
  if (!result.optimal())
    throw ValidationError("extract_duals: solve status is " + lp::to_string(result.status));
  if (problem.target_row_index.empty() && problem.horizon > 0 && problem.n_hydros > 0)
    throw ValidationError("extract_duals: problem has no target rows");
  Eigen::MatrixXd lambda(problem.horizon, static_cast<Index>(problem.n_hydros));
  for (int t = 0; t < problem.horizon; ++t)
    for (std::size_t j = 0; j < problem.n_hydros; ++j)
      lambda(t, static_cast<Index>(j)) =
          result.y_eq(problem.target_row_index[static_cast<std::size_t>(t)][j]);
  return lambda;
}

}  // namespace tsgdr::lthd
