#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/lp/interior_point.hpp"
#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/lthd/second_stage.hpp"
#include "tsgdr/random.hpp"

using namespace tsgdr;
using namespace tsgdr::lthd;

namespace {

scenario::ScenarioPath first_path(const model::GridCase& grid, std::uint64_t seed) {
  const auto lattice = scenario::synthesize_lattice(grid, 3, seed);
  return scenario::sample_paths(lattice, 1, seed)[0];
}

double flow_from(const model::GridCase& grid, int loss_cuts) {
  BuildOptions opt;
  opt.loss_cuts = loss_cuts;
  const auto problem = build_extensive_form(grid, fixtures::constant_path(1, 0, 0.0), opt);
  const auto res = lp::solve(problem.lp);
  REQUIRE(res.optimal());
  return res.x(problem.stages[0].flow[0][0]);
}

}  // namespace

TEST_CASE("case3 second stage has one target row per stage") {
  const auto grid = model::load_case(fixtures::data_path("case3.json"));
  REQUIRE(grid.horizon == 48);
  const auto path = fixtures::constant_path(48, 1, 100.0);
  const Eigen::MatrixXd targets = Eigen::MatrixXd::Constant(48, 1, 500.0);
  const auto problem = build_second_stage(grid, path, targets);
  CHECK(problem.lp.n_vars() == 48 * (3 + 1 + 1 + 1 + 3 * 2 + 3 + 2));
  CHECK(problem.target_rows.size() == 48);
  CHECK(problem.target_rows[0][0] == "target:1:0");
  int tagged = 0;
  for (const auto& tag : problem.lp.row_tags) tagged += !tag.empty();
  CHECK(tagged == 48);
}

TEST_CASE("rows only couple consecutive stages") {
  const auto grid = model::synthesize_case(6, 2, 3, 5);
  const auto path = first_path(grid, 3);
  const auto problem = build_second_stage(grid, path, Eigen::MatrixXd::Constant(5, 2, 100.0));
  std::vector<int> stage_of(static_cast<std::size_t>(problem.lp.n_vars()), -1);
  for (std::size_t t = 0; t < problem.stages.size(); ++t) {
    const auto& s = problem.stages[t];
    for (const auto* fam : {&s.volume, &s.turbine, &s.spill, &s.dev_plus, &s.dev_minus, &s.generation, &s.angle})
      for (auto c : *fam) stage_of[static_cast<std::size_t>(c)] = static_cast<int>(t);
    for (const auto& f : s.flow)
      for (auto c : f) stage_of[static_cast<std::size_t>(c)] = static_cast<int>(t);
  }
  for (int s : stage_of) REQUIRE(s >= 0);
  const lp::SparseMatrix rows_major = problem.lp.eq_matrix.transpose();
  for (Eigen::Index i = 0; i < rows_major.outerSize(); ++i) {
    int lo = 1 << 30, hi = -1;
    for (lp::SparseMatrix::InnerIterator it(rows_major, i); it; ++it) {
      lo = std::min(lo, stage_of[static_cast<std::size_t>(it.row())]);
      hi = std::max(hi, stage_of[static_cast<std::size_t>(it.row())]);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("null system costs nothing") {
  auto grid = fixtures::hydro_toy(3, 0.0);
  grid.hydros[0].v0 = 0.0;
  const auto problem =
      build_second_stage(grid, fixtures::constant_path(3, 1, 0.0), Eigen::MatrixXd::Zero(3, 1));
  const auto res = lp::solve(problem.lp);
  REQUIRE(res.optimal());
  CHECK(std::abs(res.objective) < 1e-9);
  for (const auto& s : problem.stages) {
    for (auto c : s.generation) CHECK(std::abs(res.x(c)) < 1e-9);
    CHECK(std::abs(res.x(s.dev_plus[0])) < 1e-9);
    CHECK(std::abs(res.x(s.dev_minus[0])) < 1e-9);
  }
}

TEST_CASE("targets at the unconstrained optimum reproduce its cost") {
  const auto grid = model::synthesize_case(5, 2, 8, 6);
  const auto path = first_path(grid, 8);
  const auto ef = build_extensive_form(grid, path);
  const auto ef_res = lp::solve(ef.lp);
  REQUIRE(ef_res.optimal());
  const Eigen::MatrixXd volumes = ef.hydro_values(ef_res.x, &StageVars::volume);
  const auto sol = solve_second_stage(grid, path, volumes);
  REQUIRE(sol.ok);
  CHECK(sol.cost == doctest::Approx(ef_res.objective).epsilon(1e-6));
  CHECK(sol.deviation < 1e-6);
  for (Eigen::Index k = 0; k < sol.lambda.size(); ++k)
    CHECK(std::abs(sol.lambda(k)) <= default_penalty(grid) * (1.0 + 1e-9));
}

TEST_CASE("lossless branch gives a single symmetric cut") {
  const model::Branch br{1, 2, -10.0, 0.0, 50.0};
  const auto rows = dcll_block(br, 5);
  REQUIRE(rows.loss_cuts.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(rows.loss_cuts[k][0] == 1.0);
    CHECK(rows.loss_cuts[k][1] == 1.0);
    CHECK(rows.loss_rhs[k] == 0.0);
  }
  CHECK(rows.flow_limit == 50.0);
  CHECK_THROWS_AS(dcll_block(br, 0), ValidationError);
}

TEST_CASE("loss cuts converge to the quadratic loss") {
  const double alpha = 0.001, demand = 100.0;
  const auto grid = fixtures::two_bus_case(demand, 150.0, alpha);
  // exact: f - alpha f^2 = demand
  const double exact = (1.0 - std::sqrt(1.0 - 4.0 * alpha * demand)) / (2.0 * alpha);
  double previous_gap = 1e300;
  for (int k : {1, 3, 5, 9, 17, 33, 65}) {
    const double f = flow_from(grid, k);
    const double gap = exact - f;
    CHECK(gap >= -1e-6);
    CHECK(gap <= previous_gap + 1e-9);
    previous_gap = gap;
  }
  CHECK(previous_gap < 0.05);
  CHECK(flow_from(grid, 1) == doctest::Approx(demand).epsilon(1e-8));
}

TEST_CASE("congested branch binds the outermost tangent") {
  const double alpha = 0.001;
  const auto grid = fixtures::two_bus_case(100.0, 105.0, alpha);
  BuildOptions opt;
  opt.loss_cuts = 11;
  const auto problem = build_extensive_form(grid, fixtures::constant_path(1, 0, 0.0), opt);
  const auto res = lp::solve(problem.lp);
  REQUIRE(res.optimal());
  const double fij = res.x(problem.stages[0].flow[0][0]);
  const double fji = res.x(problem.stages[0].flow[0][1]);
  CHECK(fij == doctest::Approx(105.0).epsilon(1e-8));
  // tangent at +limit: f_ij + f_ji = alpha (2 s f_ij - s^2)
  const double s = 105.0;
  CHECK(fij + fji == doctest::Approx(alpha * (2 * s * fij - s * s)).epsilon(1e-7));
  const auto slack = problem.lp.in_matrix * res.x - problem.lp.in_rhs;
  Eigen::Index tightest;
  slack.minCoeff(&tightest);
  CHECK(tightest == 10);
}

TEST_CASE("any finite target matrix is feasible") {
  const auto grid = model::synthesize_case(6, 3, 12, 6);
  const auto path = first_path(grid, 12);
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::MatrixXd targets(6, 3);
    for (Eigen::Index t = 0; t < 6; ++t)
      for (Eigen::Index j = 0; j < 3; ++j) {
        const double vmax = grid.hydros[static_cast<std::size_t>(j)].v_max;
        targets(t, j) = rng.uniform(-vmax, 3.0 * vmax);
      }
    const auto sol = solve_second_stage(grid, path, targets);
    REQUIRE(sol.ok);
  }
}

TEST_CASE("water and power are conserved at the solution") {
  const auto grid = model::synthesize_case(7, 3, 4, 5);
  const auto path = first_path(grid, 4);
  const auto problem = build_second_stage(grid, path, Eigen::MatrixXd::Constant(5, 3, 200.0));
  const auto res = lp::solve(problem.lp);
  REQUIRE(res.optimal());
  const auto sinks = model::cascade_sinks(grid);
  for (int t = 0; t < 5; ++t) {
    const auto& s = problem.stages[static_cast<std::size_t>(t)];
    double change = 0.0, inflow = 0.0, leaving = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double before = t == 0 ? grid.hydros[j].v0
                                   : res.x(problem.stages[static_cast<std::size_t>(t - 1)].volume[j]);
      change += res.x(s.volume[j]) - before;
      inflow += path.inflows(t, static_cast<Eigen::Index>(j));
    }
    for (auto j : sinks) leaving += res.x(s.turbine[j]) + res.x(s.spill[j]);
    // releases that are not sinks leave the system only if nothing sits downstream
    std::vector<bool> turbine_has_next(3, false), spill_has_next(3, false);
    for (const auto& h : grid.hydros) {
      for (int k : h.upstream_turbine) turbine_has_next[static_cast<std::size_t>(k)] = true;
      for (int k : h.upstream_spill) spill_has_next[static_cast<std::size_t>(k)] = true;
    }
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::find(sinks.begin(), sinks.end(), j) != sinks.end()) continue;
      if (!turbine_has_next[j]) leaving += res.x(s.turbine[j]);
      if (!spill_has_next[j]) leaving += res.x(s.spill[j]);
    }
    CHECK(change == doctest::Approx(inflow - leaving).epsilon(1e-6).scale(1.0));
    for (auto row : s.power_rows) {
      const double lhs = problem.lp.eq_matrix.row(row).dot(res.x);
      CHECK(std::abs(lhs - problem.lp.eq_rhs(row)) <= 1e-6);
    }
  }
}

TEST_CASE("target duals saturate at the penalty outside the feasible box") {
  const auto grid = fixtures::hydro_toy(2);
  const auto path = fixtures::constant_path(2, 1, 10.0);
  BuildOptions opt;
  opt.penalty = 1e4;
  SecondStageOptions so;
  so.build = opt;
  // far above vmax: x stops at vmax, d+ > 0, raising the target costs +penalty
  auto above = solve_second_stage(grid, path, Eigen::MatrixXd::Constant(2, 1, 500.0), so);
  REQUIRE(above.ok);
  CHECK(above.lambda(0, 0) == doctest::Approx(1e4).epsilon(1e-8));
  CHECK(above.lambda(1, 0) == doctest::Approx(1e4).epsilon(1e-8));
  // below vmin: d- > 0, raising the target lowers cost
  auto below = solve_second_stage(grid, path, Eigen::MatrixXd::Constant(2, 1, -50.0), so);
  REQUIRE(below.ok);
  CHECK(below.lambda(0, 0) == doctest::Approx(-1e4).epsilon(1e-8));
}

TEST_CASE("wasting and hoarding water give opposite target duals") {
  const auto grid = fixtures::hydro_toy(2, 30.0);
  const auto path = fixtures::constant_path(2, 1, 5.0);
  auto fd_slope = [&](Eigen::MatrixXd targets) {
    const double h = 1e-3;
    auto up = targets, down = targets;
    up(0, 0) += h;
    down(0, 0) -= h;
    return (solve_second_stage(grid, path, up).cost - solve_second_stage(grid, path, down).cost) / (2 * h);
  };
  // emptying the reservoir at stage 1 spills water that stage 2 needs:
  // raising that target saves thermal energy later
  Eigen::MatrixXd waste(2, 1);
  waste << 1.0, 0.0;
  const auto w = solve_second_stage(grid, path, waste);
  REQUIRE(w.ok);
  CHECK(w.lambda(0, 0) == doctest::Approx(-100.0).epsilon(1e-5));
  CHECK(fd_slope(waste) == doctest::Approx(w.lambda(0, 0)).epsilon(1e-6));
  // holding water at stage 1 burns thermal now while stage 2 spills
  Eigen::MatrixXd hoard(2, 1);
  hoard << 50.0, 0.0;
  const auto k = solve_second_stage(grid, path, hoard);
  REQUIRE(k.ok);
  CHECK(k.lambda(0, 0) == doctest::Approx(100.0).epsilon(1e-5));
  CHECK(fd_slope(hoard) == doctest::Approx(k.lambda(0, 0)).epsilon(1e-6));
}

TEST_CASE("target duals match central differences of Q") {
  const auto grid = model::synthesize_case(4, 2, 31, 4);
  const auto path = first_path(grid, 31);
  Rng rng(4);
  Eigen::MatrixXd targets(4, 2);
  for (Eigen::Index t = 0; t < 4; ++t)
    for (Eigen::Index j = 0; j < 2; ++j)
      targets(t, j) = rng.uniform(0.2, 0.9) * grid.hydros[static_cast<std::size_t>(j)].v_max;
  const auto base = solve_second_stage(grid, path, targets);
  REQUIRE(base.ok);
  int agree = 0, total = 0;
  for (Eigen::Index k = 0; k < targets.size(); ++k) {
    const double h = 1e-4 * (1.0 + std::abs(targets(k)));
    auto up = targets, down = targets;
    up(k) += h;
    down(k) -= h;
    const auto su = solve_second_stage(grid, path, up);
    const auto sd = solve_second_stage(grid, path, down);
    REQUIRE(su.ok);
    REQUIRE(sd.ok);
    const double fd = (su.cost - sd.cost) / (2 * h);
    ++total;
    if (std::abs(fd - base.lambda(k)) <= std::max(1e-3, 1e-3 * std::abs(base.lambda(k)))) ++agree;
  }
  CHECK(agree >= total - 1);
}

TEST_CASE("builder rejects malformed inputs") {
  const auto grid = fixtures::hydro_toy(2);
  const auto path = fixtures::constant_path(2, 1, 1.0);
  CHECK_THROWS_AS(build_second_stage(grid, path, Eigen::MatrixXd::Zero(3, 1)), DimensionError);
  CHECK_THROWS_AS(build_second_stage(grid, fixtures::constant_path(3, 1, 1.0), Eigen::MatrixXd::Zero(3, 1)),
                  DimensionError);
  BuildOptions bad;
  bad.penalty = 0.0;
  CHECK_THROWS_AS(build_second_stage(grid, path, Eigen::MatrixXd::Zero(2, 1), bad), ValidationError);
  Eigen::MatrixXd nan_targets = Eigen::MatrixXd::Zero(2, 1);
  nan_targets(0, 0) = std::nan("");
  CHECK_THROWS_AS(build_second_stage(grid, path, nan_targets), ValidationError);
  const auto problem = build_second_stage(grid, path, Eigen::MatrixXd::Zero(2, 1));
  lp::SolveResult failed;
  CHECK_THROWS_AS(extract_duals(problem, failed), ValidationError);
}

TEST_CASE("policy evaluation reports mean, spread and failures") {
  const auto grid = model::synthesize_case(5, 2, 2, 4);
  const auto lattice = scenario::synthesize_lattice(grid, 3, 2);
  const auto paths = scenario::sample_paths(lattice, 6, 17);
  const Eigen::VectorXd v0 = Eigen::Map<const Eigen::VectorXd>(grid.v0().data(), 2);
  TargetPolicy hold = [&](const scenario::ScenarioPath& p) {
    return Eigen::MatrixXd(v0.transpose().replicate(p.horizon(), 1));
  };
  EvalOptions opt;
  opt.workers = 3;
  const auto summary = evaluate_policy_cost(grid, paths, hold, opt);
  CHECK(summary.n_failed == 0);
  CHECK(summary.costs.size() == 6);
  double mean = 0.0;
  for (double c : summary.costs) mean += c / 6.0;
  CHECK(summary.mean_cost == doctest::Approx(mean).epsilon(1e-12));
  CHECK(summary.std_cost >= 0.0);
  CHECK(summary.decisions == 24);
  opt.workers = 1;
  const auto serial = evaluate_policy_cost(grid, paths, hold, opt);
  CHECK(serial.costs == summary.costs);
}

TEST_CASE("second-stage solves end on an exact vertex") {
  Rng rng(101);
  for (int k = 0; k < 50; ++k) {
    const int n = 1 + k % 3, horizon = 2 + (5 * k) % 7;
    const auto grid = model::synthesize_case(3 + k % 3, n, 500 + static_cast<std::uint64_t>(k), horizon);
    const auto path = first_path(grid, 500 + static_cast<std::uint64_t>(k));
    Eigen::MatrixXd targets(horizon, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& h = grid.hydros[static_cast<std::size_t>(j)];
      const double r = h.v_max - h.v_min;
      for (Eigen::Index t = 0; t < horizon; ++t) targets(t, j) = rng.uniform(h.v_min - 0.2 * r, h.v_max + 0.2 * r);
    }
    const auto problem = build_second_stage(grid, path, targets);
    const auto res = lp::solve(problem.lp);
    REQUIRE(res.optimal());
    CHECK(res.polished);
    CHECK(res.kkt.primal <= 1e-13);
    CHECK(res.kkt.gap <= 1e-10);
  }
}
