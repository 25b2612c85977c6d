#pragma once

#include <cmath>
#include <string>

#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) {
  return std::string(TSGDR_DATA_DIR) + "/" + name;
}

/// Generator 1 at bus 1 feeds `demand` MW at bus 2 over one lossy branch;
/// an expensive generator 2 at bus 2 covers anything the branch cannot carry.
inline tsgdr::model::GridCase two_bus_case(double demand, double limit, double alpha, int horizon = 2) {
  using namespace tsgdr::model;
  GridCase g;
  g.horizon = horizon;
  g.stage_hours = 1.0;
  g.reference_bus = 1;
  g.buses = {{1, std::vector<double>(static_cast<std::size_t>(horizon), 0.0)},
             {2, std::vector<double>(static_cast<std::size_t>(horizon), demand)}};
  // alpha = g / (g^2 + b^2) with b = -10
  const double b = -10.0;
  const double cond = alpha > 0.0 ? (1.0 - std::sqrt(1.0 - 4.0 * alpha * alpha * b * b)) / (2.0 * alpha) : 0.0;
  g.branches = {{1, 2, b, cond, limit}};
  g.generators = {{1, 1, std::vector<double>(static_cast<std::size_t>(horizon), 10.0), 0.0, 1000.0,
                   GeneratorKind::thermal},
                  {2, 2, std::vector<double>(static_cast<std::size_t>(horizon), 500.0), 0.0, 1000.0,
                   GeneratorKind::thermal}};
  validate(g);
  return g;
}

/// Single hydro at bus 1 with an expensive thermal at bus 2 serving the load.
inline tsgdr::model::GridCase hydro_toy(int horizon, double demand = 50.0) {
  using namespace tsgdr::model;
  GridCase g;
  g.horizon = horizon;
  g.stage_hours = 1.0;
  g.reference_bus = 1;
  g.buses = {{1, std::vector<double>(static_cast<std::size_t>(horizon), 0.0)},
             {2, std::vector<double>(static_cast<std::size_t>(horizon), demand)}};
  g.branches = {{1, 2, -10.0, 0.0, 200.0}};
  g.generators = {{1, 1, std::vector<double>(static_cast<std::size_t>(horizon), 0.0), 0.0, 40.0,
                   GeneratorKind::hydro},
                  {2, 2, std::vector<double>(static_cast<std::size_t>(horizon), 100.0), 0.0, 200.0,
                   GeneratorKind::thermal}};
  HydroUnit h;
  h.generator = 1;
  h.v_min = 0.0;
  h.v_max = 100.0;
  h.v0 = 50.0;
  h.production_factor = 1.0;
  g.hydros = {h};
  validate(g);
  return g;
}

inline tsgdr::scenario::ScenarioPath constant_path(int horizon, std::size_t n_hydros, double inflow) {
  tsgdr::scenario::ScenarioPath p;
  p.inflows = Eigen::MatrixXd::Constant(horizon, static_cast<Eigen::Index>(n_hydros), inflow);
  p.source_id = "const";
  return p;
}

}  // namespace fixtures

namespace fixtures {

/// Small convex instance: synthetic 3-bus grid with `n_hydros` reservoirs and a
/// 3-point inflow lattice.
struct Toy {
  tsgdr::model::GridCase grid;
  tsgdr::scenario::ScenarioSet set;
};

inline Toy convex_toy(int n_hydros, int horizon, std::uint64_t seed, int buses = 3) {
  auto grid = tsgdr::model::synthesize_case(buses, n_hydros, seed, horizon);
  auto set = tsgdr::scenario::synthesize_lattice(grid, 3, seed);
  return {std::move(grid), std::move(set)};
}

/// The lattice collapsed to its expected value at every stage.
inline tsgdr::scenario::ScenarioSet deterministic_lattice(const tsgdr::scenario::ScenarioSet& set) {
  std::vector<std::vector<tsgdr::scenario::LatticeNode>> stages;
  for (int t = 1; t <= set.horizon(); ++t) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(set.n_hydros()));
    for (const auto& node : set.stage_support(t)) mean += node.probability * node.inflow;
    stages.push_back({{mean, 1.0}});
  }
  return tsgdr::scenario::ScenarioSet::lattice(std::move(stages));
}

}  // namespace fixtures
