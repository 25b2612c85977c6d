#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "tsgdr/error.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/random.hpp"

namespace tsgdr::model {

GridCase synthesize_case(int n_buses, int n_hydros, std::uint64_t seed,
                         int horizon) {
  if (n_buses < 2) throw ValidationError("synthesize_case: n_buses must be >= 2");
  if (n_hydros < 1) throw ValidationError("synthesize_case: n_hydros must be >= 1");
  if (horizon < 2) throw ValidationError("synthesize_case: horizon must be >= 2");

  Rng rng(mix_seed(seed, 0x5ca5e));
  GridCase grid;
  grid.horizon = horizon;
  grid.stage_hours = 730.0;
  grid.reference_bus = 0;

  // Loads everywhere except one bus in fourteen (28 buses -> 26 loads).
  const int unloaded = n_buses / 14;
  double peak_total = 0.0;
  std::vector<double> total(static_cast<std::size_t>(horizon), 0.0);
  for (int i = 0; i < n_buses; ++i) {
    Bus bus{i, std::vector<double>(static_cast<std::size_t>(horizon), 0.0)};
    if (i >= unloaded) {
      const double base = rng.uniform(20.0, 80.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int t = 0; t < horizon; ++t) {
        const double season =
            1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * t / 12.0 + phase);
        bus.demand[static_cast<std::size_t>(t)] =
            base * season * rng.uniform(0.97, 1.03);
      }
    }
    for (int t = 0; t < horizon; ++t)
      total[static_cast<std::size_t>(t)] += bus.demand[static_cast<std::size_t>(t)];
    grid.buses.push_back(std::move(bus));
  }
  peak_total = *std::max_element(total.begin(), total.end());

  // Spanning tree plus up to three loops.
  std::set<std::pair<int, int>> edges;
  for (int i = 1; i < n_buses; ++i) {
    const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i)));
    edges.insert({j, i});
  }
  const int max_edges = n_buses * (n_buses - 1) / 2;
  int loops = std::min(3, max_edges - (n_buses - 1));
  while (loops > 0) {
    int a = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_buses)));
    int b = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_buses)));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (edges.insert({a, b}).second) --loops;
  }
  for (const auto& [a, b] : edges) {
    Branch br;
    br.from_bus = a;
    br.to_bus = b;
    br.b = -rng.uniform(5.0, 20.0);
    // Choose g so that g / (g^2 + b^2) = alpha, with alpha * D^2 ~ 0.2-1% of D.
    const double alpha = rng.uniform(0.2, 1.0) * 0.01 / peak_total;
    br.g = (1.0 - std::sqrt(1.0 - 4.0 * alpha * alpha * br.b * br.b)) / (2.0 * alpha);
    br.limit = 1.5 * peak_total;
    grid.branches.push_back(br);
  }

  // Thermal fleet alone covers 1.3x peak demand plus a loss margin.
  const int n_thermal = std::max(1, static_cast<int>(std::lround(n_buses * 23.0 / 28.0)));
  std::vector<double> weights(static_cast<std::size_t>(n_thermal));
  double weight_sum = 0.0;
  for (auto& w : weights) weight_sum += (w = rng.uniform(0.5, 1.5));
  int next_id = 1;
  for (int k = 0; k < n_thermal; ++k) {
    Generator g;
    g.id = next_id++;
    g.bus = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_buses)));
    g.kind = GeneratorKind::thermal;
    g.p_min = 0.0;
    g.p_max = 1.3 * 1.1 * peak_total * weights[static_cast<std::size_t>(k)] / weight_sum;
    const double c = 20.0 + 180.0 * (k + rng.uniform()) / n_thermal;
    g.cost.assign(static_cast<std::size_t>(horizon), c);
    grid.generators.push_back(std::move(g));
  }

  std::vector<bool> feeds(static_cast<std::size_t>(n_hydros), false);
  for (int j = 0; j < n_hydros; ++j) {
    Generator g;
    g.id = next_id++;
    g.bus = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_buses)));
    g.kind = GeneratorKind::hydro;
    g.p_min = 0.0;
    g.p_max = 0.6 * peak_total / n_hydros * rng.uniform(0.7, 1.3);
    g.cost.assign(static_cast<std::size_t>(horizon), 0.0);

    HydroUnit h;
    h.generator = g.id;
    h.v_max = rng.uniform(300.0, 1000.0);
    h.v_min = 0.05 * h.v_max;
    h.v0 = 0.5 * h.v_max;
    // Full-power release over one stage uses a quarter of the reservoir.
    h.production_factor = 0.25 * h.v_max / (g.p_max * grid.stage_hours);
    if (j > 0 && rng.uniform() < 0.5) {
      const int k = static_cast<int>(rng.index(static_cast<std::uint64_t>(j)));
      if (!feeds[static_cast<std::size_t>(k)]) {
        feeds[static_cast<std::size_t>(k)] = true;
        h.upstream_turbine.push_back(k);
        h.upstream_spill.push_back(k);
      }
    }
    grid.generators.push_back(std::move(g));
    grid.hydros.push_back(std::move(h));
  }

  validate(grid);
  return grid;
}

}  // namespace tsgdr::model
