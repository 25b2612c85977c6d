#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/policy/policy.hpp"
#include "tsgdr/random.hpp"

using namespace tsgdr;
using namespace tsgdr::policy;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PolicySpec small_spec(PolicyKind kind, std::size_t n_h, int horizon) {
  PolicySpec spec;
  spec.kind = kind;
  spec.n_hydros = n_h;
  spec.v_min = VectorXd::Constant(static_cast<Eigen::Index>(n_h), 10.0);
  spec.v_max = VectorXd::LinSpaced(static_cast<Eigen::Index>(n_h), 100.0, 200.0);
  spec.inflow_scale = VectorXd::Constant(static_cast<Eigen::Index>(n_h), 30.0);
  spec.latent_dim = 3;
  spec.hidden = {5, 4};
  spec.horizon = horizon;
  return spec;
}

scenario::ScenarioPath random_path(Rng& rng, int horizon, std::size_t n_h) {
  scenario::ScenarioPath p;
  p.inflows.resize(horizon, static_cast<Eigen::Index>(n_h));
  for (Eigen::Index i = 0; i < p.inflows.size(); ++i) p.inflows.data()[i] = rng.uniform(0.0, 60.0);
  return p;
}

MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

double surrogate(const PolicyParams& p, const scenario::ScenarioPath& path, const VectorXd& x0,
                 const MatrixXd& lambda) {
  return (rollout(p, path, x0).targets.array() * lambda.array()).sum();
}

/// Max over coordinates of |analytic - central difference| / max(1, |fd|).
double fd_error(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0,
                const MatrixXd& lambda, double h) {
  const auto fwd = rollout(params, path, x0);
  const VectorXd g = vjp(params, fwd, path, x0, lambda);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < params.theta.size(); ++k) {
    PolicyParams up = params, dn = params;
    up.theta(k) += h;
    dn.theta(k) -= h;
    const double fd = (surrogate(up, path, x0, lambda) - surrogate(dn, path, x0, lambda)) / (2 * h);
    worst = std::max(worst, std::abs(g(k) - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("zero recurrent network targets the mid volume at every stage") {
  auto spec = small_spec(PolicyKind::ddr, 2, 4);
  PolicyParams p{spec, VectorXd::Zero(static_cast<Eigen::Index>(spec.n_parameters()))};
  Rng rng(1);
  const auto path = random_path(rng, 4, 2);
  const MatrixXd t = rollout(p, path, VectorXd::Constant(2, 50.0)).targets;
  for (int s = 0; s < 4; ++s) {
    CHECK(t(s, 0) == doctest::Approx(55.0).epsilon(1e-14));
    CHECK(t(s, 1) == doctest::Approx(105.0).epsilon(1e-14));
  }
}

TEST_CASE("recurrent rule matches a hand-computed two-stage pass") {
  PolicySpec spec;
  spec.n_hydros = 1;
  spec.v_min = VectorXd::Constant(1, 0.0);
  spec.v_max = VectorXd::Constant(1, 100.0);
  spec.inflow_scale = VectorXd::Constant(1, 10.0);
  spec.latent_dim = 1;
  spec.hidden = {};
  // single layer: input (w, x0, flag, l) -> output (head, latent)
  REQUIRE(spec.layer_sizes() == std::vector<int>{4, 2});
  REQUIRE(spec.n_parameters() == 10);
  VectorXd theta(10);
  // W column-major 2x4, then b
  theta << 0.5, -0.2, 1.0, 0.3, -1.0, 0.7, 2.0, 0.4, 0.1, -0.1;
  PolicyParams p{spec, theta};
  scenario::ScenarioPath path;
  path.inflows.resize(2, 1);
  path.inflows << 99.0, 20.0;
  const VectorXd x0 = VectorXd::Constant(1, 75.0);
  const auto tape = ddr_forward(p, path, x0);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double x0n = 2.0 * 75.0 / 100.0 - 1.0;
  const double h1 = 1.0 * x0n + (-1.0) * 1.0 + 2.0 * 0.0 + 0.1;
  const double l1 = std::tanh(0.3 * x0n + 0.7 * 1.0 + 0.4 * 0.0 - 0.1);
  const double h2 = 0.5 * 2.0 + 2.0 * l1 + 0.1;
  const double l2 = std::tanh(-0.2 * 2.0 + 0.4 * l1 - 0.1);
  CHECK(tape.targets(0, 0) == doctest::Approx(100.0 * sig(h1)).epsilon(1e-14));
  CHECK(tape.targets(1, 0) == doctest::Approx(100.0 * sig(h2)).epsilon(1e-14));
  CHECK(tape.latent[2](0) == doctest::Approx(l2).epsilon(1e-14));

  // d(x_hat_2)/d(W[0,0]) = 100 s(1-s) * w2n
  MatrixXd lambda(2, 1);
  lambda << 0.0, 1.0;
  const VectorXd g = ddr_backward(p, tape, lambda);
  CHECK(g(0) == doctest::Approx(100.0 * sig(h2) * (1 - sig(h2)) * 2.0).epsilon(1e-12));
}

TEST_CASE("rules run past their training horizon and stay causal") {
  Rng rng(2);
  auto spec = small_spec(PolicyKind::ddr, 2, 6);
  const auto p = init_params(spec, 7);
  const VectorXd x0 = VectorXd::Constant(2, 60.0);
  const auto path = random_path(rng, 12, 2);
  const MatrixXd full = rollout(p, path, x0).targets;
  CHECK(full.rows() == 12);
  CHECK(full.allFinite());
  for (int k = 1; k < 12; ++k) {
    auto changed = path;
    changed.inflows.row(k).array() += 25.0;
    const MatrixXd t = rollout(p, changed, x0).targets;
    CHECK(t.topRows(k) == full.topRows(k));
    CHECK(t.row(k) != full.row(k));
  }
  auto lspec = small_spec(PolicyKind::ldr, 2, 6);
  auto lp = init_params(lspec, 7);
  lp.theta = random_matrix(rng, lp.theta.size(), 1);
  const scenario::ScenarioPath head{path.inflows.topRows(6), "head"};
  const MatrixXd lfull = rollout(lp, head, x0).targets;
  for (int k = 1; k < 6; ++k) {
    auto changed = head;
    changed.inflows.row(k).array() += 25.0;
    const MatrixXd t = rollout(lp, changed, x0).targets;
    CHECK(t.topRows(k) == lfull.topRows(k));
  }
  CHECK_THROWS_AS(rollout(lp, path, x0), DimensionError);
}

TEST_CASE("zero multipliers give a zero gradient") {
  Rng rng(3);
  for (auto kind : {PolicyKind::ddr, PolicyKind::ldr}) {
    const auto p = init_params(small_spec(kind, 2, 5), 4);
    const auto path = random_path(rng, 5, 2);
    const VectorXd x0 = VectorXd::Constant(2, 40.0);
    const auto fwd = rollout(p, path, x0);
    CHECK(vjp(p, fwd, path, x0, MatrixXd::Zero(5, 2)).isZero(0.0));
  }
}

TEST_CASE("back-propagation matches finite differences of the surrogate") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n_h = 1 + static_cast<std::size_t>(trial % 3);
    const int horizon = 3 + trial;
    const auto path = random_path(rng, horizon, n_h);
    const VectorXd x0 = VectorXd::Constant(static_cast<Eigen::Index>(n_h), 70.0);
    const MatrixXd lambda = random_matrix(rng, horizon, static_cast<Eigen::Index>(n_h)) * 50.0;

    auto dspec = small_spec(PolicyKind::ddr, n_h, horizon);
    dspec.squash = trial % 2 == 0;
    const auto dp = init_params(dspec, 100 + static_cast<std::uint64_t>(trial));
    CHECK(fd_error(dp, path, x0, lambda, 1e-6) < 1e-5);

    auto lp = init_params(small_spec(PolicyKind::ldr, n_h, horizon), 0);
    lp.theta = random_matrix(rng, lp.theta.size(), 1);
    CHECK(fd_error(lp, path, x0, lambda, 1e-3) < 1e-8);
  }
}

TEST_CASE("linear rule starts at the initial volume") {
  Rng rng(6);
  const auto p = init_params(small_spec(PolicyKind::ldr, 3, 8), 0);
  const VectorXd x0 = (VectorXd(3) << 15.0, 120.0, 190.0).finished();
  const MatrixXd t = rollout(p, random_path(rng, 8, 3), x0).targets;
  for (int s = 0; s < 8; ++s)
    for (int j = 0; j < 3; ++j) CHECK(t(s, j) == doctest::Approx(x0(j)).epsilon(1e-14));
  PolicyParams zero{p.spec, VectorXd::Zero(p.theta.size())};
  CHECK(rollout(zero, random_path(rng, 8, 3), x0).targets.isZero(0.0));
}

TEST_CASE("initialization is seeded and deterministic") {
  const auto spec = small_spec(PolicyKind::ddr, 2, 4);
  CHECK(init_params(spec, 9).theta == init_params(spec, 9).theta);
  CHECK(init_params(spec, 9).theta != init_params(spec, 10).theta);
  const auto p = init_params(spec, 9);
  // biases of every layer are zero
  const auto sizes = spec.layer_sizes();
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    offset += static_cast<Eigen::Index>(sizes[i + 1]) * sizes[i];
    CHECK(p.theta.segment(offset, sizes[i + 1]).isZero(0.0));
    offset += sizes[i + 1];
  }
}

TEST_CASE("squashed targets stay inside the reservoir bounds") {
  Rng rng(8);
  auto spec = small_spec(PolicyKind::ddr, 3, 10);
  auto p = init_params(spec, 1);
  p.theta *= 20.0;
  for (int k = 0; k < 100; ++k) {
    const auto path = random_path(rng, 10, 3);
    const VectorXd x0 = VectorXd::Constant(3, rng.uniform(10.0, 100.0));
    const MatrixXd t = rollout(p, path, x0).targets;
    for (int j = 0; j < 3; ++j) {
      CHECK(t.col(j).minCoeff() >= spec.v_min(j));
      CHECK(t.col(j).maxCoeff() <= spec.v_max(j));
    }
  }
}

TEST_CASE("spec for a case takes bounds and inflow scale from the data") {
  const auto grid = model::load_case(fixtures::data_path("case3.json"));
  const auto set = scenario::load_scenarios(fixtures::data_path("case3_lattice.csv"), 1, grid.horizon);
  const auto spec = PolicySpec::for_case(PolicyKind::ddr, grid, set);
  CHECK(spec.n_hydros == 1);
  CHECK(spec.v_min(0) == 50.0);
  CHECK(spec.v_max(0) == 1000.0);
  CHECK(spec.inflow_scale(0) == doctest::Approx(180.0).epsilon(1e-9));
  CHECK(spec.horizon == 48);
  CHECK(spec.layer_sizes() == std::vector<int>{19, 64, 64, 17});
}

TEST_CASE("checkpoints round-trip exactly") {
  for (auto kind : {PolicyKind::ddr, PolicyKind::ldr}) {
    Checkpoint c;
    c.params = init_params(small_spec(kind, 2, 4), 12);
    Rng rng(12);
    c.params.theta = random_matrix(rng, c.params.theta.size(), 1) * 1e3;
    c.seed = 12;
    c.config_hash = 0xfedcba9876543210ULL;
    c.case_hash = 0x1ULL;
    const auto text = dump_checkpoint(c);
    const auto back = parse_checkpoint(text);
    CHECK(back.params.spec == c.params.spec);
    CHECK(back.params.theta == c.params.theta);
    CHECK(back.config_hash == c.config_hash);
    CHECK(back.case_hash == c.case_hash);
    CHECK(back.seed == 12);
    CHECK(dump_checkpoint(back) == text);
  }
}

TEST_CASE("malformed checkpoints and inputs are rejected") {
  Checkpoint c;
  c.params = init_params(small_spec(PolicyKind::ddr, 1, 3), 1);
  auto j = dump_checkpoint(c);
  CHECK_THROWS_AS(parse_checkpoint("{"), ParseError);
  CHECK_THROWS_AS(parse_checkpoint("{}"), ParseError);
  c.params.theta.conservativeResize(c.params.theta.size() - 1);
  CHECK_THROWS_AS(parse_checkpoint(dump_checkpoint(c)), DimensionError);
  CHECK_THROWS_AS(parse_policy_kind("mlp"), ValidationError);
  const auto p = init_params(small_spec(PolicyKind::ddr, 2, 3), 1);
  CHECK_THROWS_AS(rollout(p, fixtures::constant_path(3, 1, 1.0), VectorXd::Zero(2)), DimensionError);
  CHECK_THROWS_AS(rollout(p, fixtures::constant_path(3, 2, 1.0), VectorXd::Zero(1)), DimensionError);
  auto bad = small_spec(PolicyKind::ddr, 2, 3);
  bad.v_min(0) = 1e4;
  CHECK_THROWS_AS(init_params(bad, 1), ValidationError);
}

TEST_CASE("inference targets equal the taped forward pass") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + trial % 3;
    auto spec = small_spec(trial % 2 ? PolicyKind::ddr : PolicyKind::ldr, n, 5);
    spec.squash = trial % 4 != 1;
    auto p = init_params(spec, static_cast<std::uint64_t>(trial));
    p.theta += 0.3 * random_matrix(rng, p.theta.size(), 1);
    const VectorXd x0 = VectorXd::Constant(static_cast<Eigen::Index>(n), 40.0 + trial);
    const auto path = random_path(rng, 5, n);
    const MatrixXd a = rollout(p, path, x0).targets;
    const MatrixXd b = targets(p, path, x0);
    REQUIRE(a.rows() == b.rows());
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()));
  }
}
