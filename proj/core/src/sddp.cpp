#include "tsgdr/sddp/sddp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/logging.hpp"
#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/parallel.hpp"
#include "tsgdr/random.hpp"

namespace tsgdr::sddp {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

VectorXd initial_volume(const model::GridCase& grid) {
  const auto v0 = grid.v0();
  return Eigen::Map<const VectorXd>(v0.data(), static_cast<Index>(v0.size()));
}

std::size_t draw(Rng& rng, const std::vector<scenario::LatticeNode>& nodes) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    acc += nodes[k].probability;
    if (u < acc) return k;
  }
  return nodes.size() - 1;
}

}  // namespace

StageSolution stage_solve(const model::GridCase& grid, int t, const VectorXd& x_in,
                          const VectorXd& inflow, const std::vector<Cut>& cuts,
                          const SddpOptions& options) {
  const std::size_t nh = grid.n_hydros();
  if (static_cast<std::size_t>(x_in.size()) != nh) throw DimensionError("stage_solve: x_in length != n_hydros");
  lp::LpBuilder b;
  lthd::PreviousVolume previous;
  std::vector<Index> copy_rows;
  for (std::size_t j = 0; j < nh; ++j) {
    const Index z = b.add_variable(-lp::kInf, lp::kInf, 0.0, "xin_" + std::to_string(j));
    previous.columns.push_back(z);
    copy_rows.push_back(b.add_eq_row({{z, 1.0}}, x_in(static_cast<Index>(j)), "xin:" + std::to_string(j)));
  }
  const auto vars = lthd::add_stage(b, grid, t, inflow, previous, options.build);
  // The epigraph variable is measured in units of the largest stage cost
  // coefficient (capped by the largest cut value at the volume bounds), so cut
  // rows and the alpha cost stay on the scale of the dispatch rows.
  Index alpha = -1;
  double unit = 1.0;
  if (!cuts.empty()) {
    double max_cost = 1.0;
    for (const auto& g : grid.generators)
      max_cost = std::max(max_cost, g.cost[static_cast<std::size_t>(t - 1)] * grid.stage_hours);
    const auto lo = grid.v_min(), hi = grid.v_max();
    for (const auto& cut : cuts) {
      if (static_cast<std::size_t>(cut.slope.size()) != nh) throw DimensionError("stage_solve: cut width != n_hydros");
      double top = cut.intercept;
      for (std::size_t j = 0; j < nh; ++j) {
        const double s = cut.slope(static_cast<Index>(j));
        top += s * (s > 0.0 ? hi[j] : lo[j]);
      }
      unit = std::max(unit, std::abs(top));
    }
    unit = std::min(unit, max_cost);
    alpha = b.add_variable(0.0, lp::kInf, unit, "alpha");
    for (const auto& cut : cuts) {
      std::vector<lp::Term> terms{{alpha, 1.0}};
      for (std::size_t j = 0; j < nh; ++j) terms.push_back({vars.volume[j], -cut.slope(static_cast<Index>(j)) / unit});
      b.add_ge_row(terms, cut.intercept / unit);
    }
  }
  const auto result = lp::solve(b.build(), options.solver);
  StageSolution sol;
  sol.status = result.status;
  if (!result.optimal()) return sol;
  sol.ok = true;
  sol.objective = result.objective;
  sol.immediate_cost = result.objective - (alpha >= 0 ? unit * result.x(alpha) : 0.0);
  sol.volumes.resize(static_cast<Index>(nh));
  sol.slope.resize(static_cast<Index>(nh));
  for (std::size_t j = 0; j < nh; ++j) {
    sol.volumes(static_cast<Index>(j)) = result.x(vars.volume[j]);
    sol.slope(static_cast<Index>(j)) = result.y_eq(copy_rows[j]);
  }
  return sol;
}

double lower_bound(const SddpState& state, const model::GridCase& grid, const scenario::ScenarioSet& set,
                   const SddpOptions& options) {
  const auto sol = stage_solve(grid, 1, initial_volume(grid), set.first_stage_inflow(),
                               state.horizon > 1 ? state.cuts[0] : std::vector<Cut>{}, options);
  if (!sol.ok) throw Error("sddp: first-stage solve ended " + lp::to_string(sol.status));
  return sol.objective;
}

SddpState sddp_train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                     const SddpOptions& options) {
  if (set.mode() != scenario::Mode::lattice)
    throw ValidationError("sddp: needs a stagewise-independent lattice");
  scenario::check_compatible(set, grid);
  if (options.iterations < 0) throw ValidationError("sddp: iterations must be >= 0");
  const auto start = std::chrono::steady_clock::now();
  const int T = set.horizon();
  SddpState state;
  state.horizon = T;
  state.n_hydros = grid.n_hydros();
  state.cuts.resize(static_cast<std::size_t>(T));
  state.seed = options.seed;
  const VectorXd x0 = initial_volume(grid);
  std::vector<std::vector<scenario::LatticeNode>> support;
  for (int t = 1; t <= T; ++t) support.push_back(set.stage_support(t));
  Rng rng(mix_seed(options.seed, 5));

  auto solve_or_throw = [&](int t, const VectorXd& x, const VectorXd& w) {
    const auto& pool = state.cuts[static_cast<std::size_t>(t - 1)];
    auto sol = stage_solve(grid, t, x, w, pool, options);
    if (!sol.ok) throw Error("sddp: stage " + std::to_string(t) + " solve ended " + lp::to_string(sol.status));
    return sol;
  };

  for (int it = 1; it <= options.iterations; ++it) {
    // forward pass
    std::vector<VectorXd> trial(static_cast<std::size_t>(T));
    VectorXd x = x0;
    for (int t = 1; t <= T; ++t) {
      const auto& nodes = support[static_cast<std::size_t>(t - 1)];
      const auto sol = solve_or_throw(t, x, nodes[draw(rng, nodes)].inflow);
      ++state.stage_solves;
      x = sol.volumes;
      trial[static_cast<std::size_t>(t - 1)] = x;
    }
    // backward pass
    for (int t = T; t >= 2; --t) {
      const auto& nodes = support[static_cast<std::size_t>(t - 1)];
      const VectorXd& point = trial[static_cast<std::size_t>(t - 2)];
      std::vector<StageSolution> sols(nodes.size());
      parallel_for(nodes.size(), options.workers,
                   [&](std::size_t k) { sols[k] = solve_or_throw(t, point, nodes[k].inflow); });
      state.stage_solves += nodes.size();
      Cut cut;
      cut.stage = t - 1;
      cut.slope = VectorXd::Zero(point.size());
      double value = 0.0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        value += nodes[k].probability * sols[k].objective;
        cut.slope += nodes[k].probability * sols[k].slope;
      }
      cut.intercept = value - cut.slope.dot(point);
      auto& pool = state.cuts[static_cast<std::size_t>(t - 2)];
      const bool duplicate = std::any_of(pool.begin(), pool.end(), [&](const Cut& c) {
        const double scale = 1e-9 * std::max(1.0, std::abs(c.value(point)));
        return std::abs(c.value(point) - value) <= scale &&
               (c.slope - cut.slope).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, c.slope.cwiseAbs().maxCoeff());
      });
      if (!duplicate) pool.push_back(std::move(cut));
    }
    const double bound = lower_bound(state, grid, set, options);
    ++state.stage_solves;
    if (!state.lower_bounds.empty()) {
      const double prev = state.lower_bounds.back();
      if (bound < prev - 1e-6 * std::max(1.0, std::abs(prev)))
        throw Error("sddp: lower bound decreased from " + std::to_string(prev) + " to " + std::to_string(bound));
    }
    state.lower_bounds.push_back(bound);
    state.iterations = it;
    const int w = options.stable_window;
    if (state.stable_at < 0 && it > w) {
      const double old = state.lower_bounds[static_cast<std::size_t>(it - 1 - w)];
      if (std::abs(bound - old) <= options.stable_tolerance * std::max(1.0, std::abs(bound))) state.stable_at = it;
    }
    log::debug("sddp iteration " + std::to_string(it) + " bound " + std::to_string(bound));
  }
  state.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return state;
}

SimulationSummary simulate(const SddpState& state, const model::GridCase& grid,
                           const std::vector<scenario::ScenarioPath>& paths, const SddpOptions& options) {
  SimulationSummary summary;
  summary.costs.assign(paths.size(), std::numeric_limits<double>::quiet_NaN());
  const VectorXd x0 = initial_volume(grid);
  std::vector<double> seconds(paths.size(), 0.0);
  std::vector<std::size_t> solves(paths.size(), 0);
  parallel_for(paths.size(), options.workers, [&](std::size_t i) {
    const auto& path = paths[i];
    if (path.horizon() != state.horizon) throw DimensionError("simulate: path horizon != policy horizon");
    VectorXd x = x0;
    double cost = 0.0;
    for (int t = 1; t <= state.horizon; ++t) {
      const auto start = std::chrono::steady_clock::now();
      const auto sol = stage_solve(grid, t, x, path.inflows.row(t - 1).transpose(),
                                   state.cuts[static_cast<std::size_t>(t - 1)], options);
      seconds[i] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ++solves[i];
      if (!sol.ok) {
        log::warn("simulate: path " + std::to_string(i) + " stage " + std::to_string(t) + " ended " +
                  lp::to_string(sol.status));
        return;
      }
      cost += sol.immediate_cost;
      x = sol.volumes;
    }
    summary.costs[i] = cost;
  });
  for (std::size_t i = 0; i < paths.size(); ++i) {
    summary.solve_seconds += seconds[i];
    summary.stage_solves += solves[i];
    if (std::isnan(summary.costs[i])) ++summary.n_failed;
  }
  std::tie(summary.mean_cost, summary.std_cost) = lthd::mean_std(summary.costs);
  return summary;
}

std::string dump_sddp_report(const SddpState& state, const SimulationSummary* simulation) {
  using nlohmann::json;
  json j;
  j["iterations"] = state.iterations;
  j["seed"] = state.seed;
  j["horizon"] = state.horizon;
  j["lower_bound"] = state.lower_bounds.empty() ? json(nullptr) : json(state.lower_bounds.back());
  j["bound_trace"] = state.lower_bounds;
  j["stable_at"] = state.stable_at;
  std::vector<std::size_t> counts;
  for (const auto& pool : state.cuts) counts.push_back(pool.size());
  j["cut_counts"] = counts;
  j["train_seconds"] = state.seconds;
  j["stage_solves"] = state.stage_solves;
  if (simulation) {
    j["simulation"] = {{"mean_cost", simulation->mean_cost},
                       {"std_cost", simulation->std_cost},
                       {"n_paths", simulation->costs.size()},
                       {"n_failed", simulation->n_failed},
                       {"stage_solves", simulation->stage_solves},
                       {"seconds_per_decision", simulation->seconds_per_decision()}};
  }
  return j.dump(1);
}

void write_cuts_csv(const SddpState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "stage,intercept";
  for (std::size_t j = 0; j < state.n_hydros; ++j) out << ",slope_" << j;
  out << '\n';
  char buf[32];
  for (const auto& pool : state.cuts)
    for (const auto& cut : pool) {
      std::snprintf(buf, sizeof buf, "%.17g", cut.intercept);
      out << cut.stage << ',' << buf;
      for (Index j = 0; j < cut.slope.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", cut.slope(j));
        out << ',' << buf;
      }
      out << '\n';
    }
}

}  // namespace tsgdr::sddp
