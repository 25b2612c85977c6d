#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/lthd/second_stage.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/policy/policy.hpp"
#include "tsgdr/scenario/scenarios.hpp"
#include "tsgdr/sddp/sddp.hpp"

namespace {

using namespace tsgdr;

// Same shape as the default synth-case run: 3 buses, 2 hydros, 12 stages.
struct Setup {
  model::GridCase grid = model::synthesize_case(3, 2, 7, 12);
  scenario::ScenarioSet set = scenario::synthesize_lattice(grid, 3, 7);
  scenario::ScenarioPath path = scenario::test_paths(set, 1, 11).front();
  Eigen::VectorXd x0;

  Setup() {
    const auto v0 = grid.v0();
    x0 = Eigen::Map<const Eigen::VectorXd>(v0.data(), static_cast<Eigen::Index>(v0.size()));
  }

  policy::PolicyParams params(policy::PolicyKind kind) const {
    return policy::init_params(policy::PolicySpec::for_case(kind, grid, set), 1);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_DdrTargets(benchmark::State& state) {
  const auto& s = setup();
  const auto params = s.params(policy::PolicyKind::ddr);
  for (auto _ : state) benchmark::DoNotOptimize(policy::ddr_targets(params, s.path, s.x0));
  state.SetItemsProcessed(state.iterations() * s.path.horizon());
}
BENCHMARK(BM_DdrTargets);

void BM_DdrForwardTape(benchmark::State& state) {
  const auto& s = setup();
  const auto params = s.params(policy::PolicyKind::ddr);
  for (auto _ : state) benchmark::DoNotOptimize(policy::ddr_forward(params, s.path, s.x0));
}
BENCHMARK(BM_DdrForwardTape);

void BM_DdrBackward(benchmark::State& state) {
  const auto& s = setup();
  const auto params = s.params(policy::PolicyKind::ddr);
  const auto tape = policy::ddr_forward(params, s.path, s.x0);
  const Eigen::MatrixXd lambda = Eigen::MatrixXd::Ones(s.path.horizon(), s.x0.size());
  for (auto _ : state) benchmark::DoNotOptimize(policy::ddr_backward(params, tape, lambda));
}
BENCHMARK(BM_DdrBackward);

void BM_LdrTargets(benchmark::State& state) {
  const auto& s = setup();
  const auto params = s.params(policy::PolicyKind::ldr);
  for (auto _ : state) benchmark::DoNotOptimize(policy::ldr_forward(params, s.path, s.x0));
}
BENCHMARK(BM_LdrTargets);

void BM_SecondStageSolve(benchmark::State& state) {
  const auto& s = setup();
  const auto params = s.params(policy::PolicyKind::ddr);
  const auto targets = policy::ddr_targets(params, s.path, s.x0);
  for (auto _ : state) {
    const auto sol = lthd::solve_second_stage(s.grid, s.path, targets);
    if (!sol.ok) state.SkipWithError("second stage did not solve");
    benchmark::DoNotOptimize(sol.cost);
  }
}
BENCHMARK(BM_SecondStageSolve)->Unit(benchmark::kMillisecond);

void BM_SddpStageSolve(benchmark::State& state) {
  const auto& s = setup();
  sddp::SddpOptions opt;
  opt.iterations = 10;
  const auto trained = sddp::sddp_train(s.grid, s.set, opt);
  const Eigen::VectorXd inflow = s.path.inflows.row(0).transpose();
  for (auto _ : state) {
    const auto sol = sddp::stage_solve(s.grid, 1, s.x0, inflow, trained.cuts.front(), opt);
    if (!sol.ok) state.SkipWithError("stage did not solve");
    benchmark::DoNotOptimize(sol.objective);
  }
}
BENCHMARK(BM_SddpStageSolve)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
