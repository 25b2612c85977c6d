// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dp_oracle.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "tsgdr/lp/interior_point.hpp"
#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/lthd/second_stage.hpp"
#include "tsgdr/random.hpp"
#include "tsgdr/sddp/sddp.hpp"
#include "tsgdr/train/gradcheck.hpp"
#include "tsgdr/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace tsgdr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

const fs::path kWork = TSGDR_WORK_DIR;

struct Instance {
  model::GridCase grid;
  scenario::ScenarioPath path;
};

Instance random_instance(int buses, int hydros, int horizon, std::uint64_t seed) {
  auto grid = model::synthesize_case(buses, hydros, seed, horizon);
  const auto set = scenario::synthesize_lattice(grid, 3, seed);
  auto path = scenario::sample_paths(set, 1, seed)[0];
  return {std::move(grid), std::move(path)};
}

MatrixXd random_targets(Rng& rng, const model::GridCase& grid, int horizon, double widen) {
  const auto n = static_cast<Index>(grid.n_hydros());
  MatrixXd x(horizon, n);
  for (Index j = 0; j < n; ++j) {
    const auto& h = grid.hydros[static_cast<std::size_t>(j)];
    const double r = h.v_max - h.v_min;
    for (Index t = 0; t < horizon; ++t) x(t, j) = rng.uniform(h.v_min - widen * r, h.v_max + widen * r);
  }
  return x;
}

double q(const model::GridCase& grid, const scenario::ScenarioPath& path, const MatrixXd& x, bool* ok = nullptr) {
  const auto s = lthd::solve_second_stage(grid, path, x);
  if (ok) *ok = s.ok;
  return s.ok ? s.cost : std::nan("");
}

// 1. Central differences of Q in each target coordinate against the target duals.
Outcome dual_gradient_law() {
  int agree = 0, excluded = 0, total = 0, failed = 0;
  Rng rng(101);
  for (int k = 0; k < 50; ++k) {
    const int hydros = 1 + k % 3, horizon = 2 + (5 * k) % 7;
    const auto inst = random_instance(3 + k % 3, hydros, horizon, 500 + static_cast<std::uint64_t>(k));
    const MatrixXd x = random_targets(rng, inst.grid, horizon, 0.2);
    const auto base = lthd::solve_second_stage(inst.grid, inst.path, x);
    if (!base.ok) {
      failed += static_cast<int>(x.size());
      continue;
    }
    for (Index c = 0; c < x.size(); ++c) {
      ++total;
      const double h = 1e-4 * (1.0 + std::abs(x(c)));
      MatrixXd up = x, dn = x;
      up(c) += h;
      dn(c) -= h;
      bool ok_up = false, ok_dn = false;
      const double qu = q(inst.grid, inst.path, up, &ok_up), qd = q(inst.grid, inst.path, dn, &ok_dn);
      if (!ok_up || !ok_dn) {
        ++failed;
        continue;
      }
      const double right = (qu - base.cost) / h, left = (base.cost - qd) / h;
      if (std::abs(right - left) > std::max(1e-3, 1e-3 * std::max(std::abs(right), std::abs(left)))) {
        ++excluded;  // stencil crosses a kink
        continue;
      }
      const double fd = (qu - qd) / (2.0 * h), lam = base.lambda(c);
      if (std::abs(fd - lam) <= std::max(1e-3, 1e-3 * std::abs(lam))) ++agree;
    }
  }
  const int checked = total - excluded - failed;
  const bool pass = failed == 0 && agree == checked && excluded <= total / 10;
  return {pass, fmt("50 instances, %d coordinates: %d agree, %d kink-excluded (%.1f%%), %d solve failures", total,
                    agree, excluded, 100.0 * excluded / std::max(total, 1), failed)};
}

// Independent central difference of theta -> Q(w, pi_theta(w)) for one coordinate.
double theta_fd(const model::GridCase& grid, const scenario::ScenarioPath& path, const policy::PolicyParams& params,
                Index k, double step) {
  const auto v0 = grid.v0();
  const VectorXd x0 = Eigen::Map<const VectorXd>(v0.data(), static_cast<Index>(v0.size()));
  auto up = params, dn = params;
  up.theta(k) += step;
  dn.theta(k) -= step;
  return (q(grid, path, policy::targets(up, path, x0)) - q(grid, path, policy::targets(dn, path, x0))) / (2 * step);
}

// 2. End-to-end gradient of the policy parameters.
Outcome end_to_end_gradient() {
  std::string detail;
  bool pass = true;
  double max_fd_mismatch = 0.0;
  for (auto kind : {policy::PolicyKind::ddr, policy::PolicyKind::ldr}) {
    const double tol = kind == policy::PolicyKind::ddr ? 1e-2 : 1e-6;
    const double need = kind == policy::PolicyKind::ddr ? 0.90 : 0.99;
    std::size_t sampled = 0, passed = 0, kinks = 0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto toy = fixtures::convex_toy(2, 6, s);
      train::TrainConfig cfg;
      auto params = policy::init_params(train::make_spec(kind, toy.grid, toy.set, cfg), s);
      if (kind == policy::PolicyKind::ldr) {
        Rng rng(s);
        for (Index i = 0; i < params.theta.size(); ++i) params.theta(i) += 0.05 * rng.normal();
      }
      const auto path = scenario::sample_paths(toy.set, 1, s)[0];
      train::GradcheckOptions o;
      o.tolerance = tol;
      o.seed = s;
      const auto report = train::gradcheck(toy.grid, path, params, o);
      for (const auto& c : report.coordinates) {
        ++sampled;
        if (c.kink) ++kinks;
        if (c.pass && !c.kink) ++passed;
      }
      for (std::size_t i = 0; i < 3 && i < report.coordinates.size(); ++i) {
        const auto& c = report.coordinates[i];
        const double fd = theta_fd(toy.grid, path, params, c.coordinate, o.step);
        max_fd_mismatch = std::max(max_fd_mismatch, std::abs(fd - c.finite_difference) /
                                                        std::max(1.0, std::abs(fd)));
      }
    }
    const double rate = static_cast<double>(passed) / static_cast<double>(sampled);
    pass = pass && rate >= need;
    detail += fmt("%s %zu/%zu pass at %g (%.1f%%, need %.0f%%, %zu kink-adjacent counted as misses); ",
                  policy::to_string(kind).c_str(), passed, sampled, tol, 100 * rate, 100 * need, kinks);
  }
  pass = pass && max_fd_mismatch <= 1e-9;
  detail += fmt("independent FD recheck mismatch %.1e", max_fd_mismatch);
  return {pass, detail};
}

// 3. Q(x') >= Q(x) + lambda . (x' - x) on 200 pairs per instance.
Outcome subgradient_inequality() {
  Rng rng(303);
  int pairs = 0, violated = 0, failed = 0;
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const int hydros = 1 + k % 3, horizon = 3 + k % 6;
    const auto inst = random_instance(3 + k % 4, hydros, horizon, 700 + static_cast<std::uint64_t>(k));
    for (int b = 0; b < 20; ++b) {
      const MatrixXd x = random_targets(rng, inst.grid, horizon, 0.3);
      const auto base = lthd::solve_second_stage(inst.grid, inst.path, x);
      if (!base.ok) {
        failed += 10;
        continue;
      }
      for (int p = 0; p < 10; ++p) {
        ++pairs;
        const MatrixXd y = random_targets(rng, inst.grid, horizon, 0.3);
        bool ok = false;
        const double qy = q(inst.grid, inst.path, y, &ok);
        if (!ok) {
          ++failed;
          continue;
        }
        const double slack = qy - (base.cost + (base.lambda.array() * (y - x).array()).sum());
        worst = std::min(worst, slack / std::abs(base.cost));
        if (slack < -1e-6 * std::abs(base.cost)) ++violated;
      }
    }
  }
  return {violated == 0 && failed == 0,
          fmt("10 instances x 200 pairs = %d: %d violations, %d solve failures, worst relative slack %.2e", pairs,
              violated, failed, worst)};
}

// 4. SDDP against the extensive form (deterministic) and a grid DP (stochastic).
Outcome sddp_exactness() {
  std::string detail;
  bool pass = true;
  for (int horizon : {6, 12}) {
    const auto toy = fixtures::convex_toy(2, horizon, 3);
    const auto det = fixtures::deterministic_lattice(toy.set);
    sddp::SddpOptions opt;
    opt.iterations = 30;
    const auto state = sddp::sddp_train(toy.grid, det, opt);
    const auto path = scenario::sample_paths(det, 1, 0)[0];
    const auto ef = lp::solve(lthd::build_extensive_form(toy.grid, path).lp);
    const auto sim = sddp::simulate(state, toy.grid, {path}, opt);
    const double lb_err = std::abs(state.lower_bounds.back() - ef.objective) / ef.objective;
    const double sim_err = std::abs(sim.mean_cost - ef.objective) / ef.objective;
    pass = pass && ef.optimal() && sim.n_failed == 0 && lb_err <= 1e-3 && sim_err <= 1e-3;
    detail += fmt("deterministic T=%d: bound %.2e, simulation %.2e off the extensive form; ", horizon, lb_err,
                  sim_err);
  }
  // Every lattice path enumerated, so the policy expectation carries no sampling error.
  const auto grid = fixtures::hydro_toy(4);
  const auto set = fixtures::three_point(4);
  sddp::SddpOptions opt;
  opt.iterations = 30;
  const auto state = sddp::sddp_train(grid, set, opt);
  const double dp = fixtures::grid_dp(grid, set, 200);
  std::vector<scenario::ScenarioPath> paths;
  std::vector<double> weights;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        MatrixXd w(4, 1);
        w(0, 0) = set.first_stage_inflow()(0);
        const int pick[3] = {a, b, c};
        double p = 1.0;
        for (int t = 0; t < 3; ++t) {
          const auto node = set.stage_support(t + 2)[static_cast<std::size_t>(pick[t])];
          w(t + 1, 0) = node.inflow(0);
          p *= node.probability;
        }
        paths.push_back({w, "lattice"});
        weights.push_back(p);
      }
  const auto sim = sddp::simulate(state, grid, paths, opt);
  double expected = 0.0;
  for (std::size_t i = 0; i < paths.size(); ++i) expected += weights[i] * sim.costs[i];
  const double lb_err = std::abs(state.lower_bounds.back() - dp) / dp;
  const double pol_err = std::abs(expected - dp) / dp;
  pass = pass && sim.n_failed == 0 && lb_err <= 5e-3 && pol_err <= 5e-3;
  detail += fmt("1-hydro lattice: bound %.2e, exact policy expectation %.2e off the 200-point DP", lb_err, pol_err);
  return {pass, detail};
}

// 8. Any target matrix, including far out-of-bounds values, has a feasible recourse.
Outcome complete_recourse() {
  Rng rng(808);
  int feasible = 0, total = 0;
  for (int k = 0; k < 10; ++k) {
    const int hydros = 1 + k % 3, horizon = 4 + k % 5;
    const auto inst = random_instance(3 + k % 4, hydros, horizon, 900 + static_cast<std::uint64_t>(k));
    for (int m = 0; m < 100; ++m) {
      MatrixXd x = random_targets(rng, inst.grid, horizon, m % 2 == 0 ? 0.0 : 2.0);
      if (m % 5 == 0)
        for (Index c = 0; c < x.size(); ++c) x(c) = rng.uniform(-1e5, 1e5);
      ++total;
      bool ok = false;
      q(inst.grid, inst.path, x, &ok);
      if (ok) ++feasible;
    }
  }
  return {feasible == total, fmt("%d/%d random target matrices solved to optimality", feasible, total)};
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + TSGDR_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string drop_last_column(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

struct CompareRun {
  bool ok = false;
  std::string error;
  fs::path dir;
  double seconds = 0.0;
};

const std::string kCaseArgs = "--case \"" + (kWork / "case" / "case.json").string() + "\" --scenarios \"" +
                              (kWork / "case" / "scenarios.csv").string() + "\"";
const std::string kCompareArgs =
    " compare --epochs 300 --batch 8 --lr 1e-2 --n-val 50 --eval-every 10 --patience 1000 --iterations 60 "
    "--n-test 200";

CompareRun compare_run(const std::string& name) {
  CompareRun r;
  r.dir = kWork / name;
  const auto start = std::chrono::steady_clock::now();
  const int rc = run("--seed 7 --out \"" + r.dir.string() + "\"" + kCompareArgs + " " + kCaseArgs,
                     kWork / (name + ".log"));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.ok = rc == 0;
  if (!r.ok) r.error = "compare exited with " + std::to_string(rc) + ", see " + (kWork / (name + ".log")).string();
  return r;
}

struct Row {
  double mean = 0.0, gap = 0.0;
};

std::map<std::string, Row> compare_rows(const fs::path& dir) {
  std::map<std::string, Row> rows;
  const auto csv = read_csv(dir / "compare.csv");
  for (std::size_t i = 1; i < csv.size(); ++i)
    if (csv[i].size() == 6) rows[csv[i][0]] = {std::stod(csv[i][2]), std::stod(csv[i][4])};
  return rows;
}

// 5. 2-hydro, T=12, 3-point lattice through the CLI.
Outcome comparison_shape(const CompareRun& r) {
  if (!r.ok) return {false, r.error};
  auto rows = compare_rows(r.dir);
  if (!rows.count("ts-ddr") || !rows.count("ts-ldr") || !rows.count("sddp")) return {false, "compare.csv incomplete"};
  const auto report = nlohmann::json::parse(slurp(r.dir / "sddp" / "sddp_report.json"));
  const double lb = report.at("lower_bound").get<double>();
  const double ddr_vs_lb = (rows["ts-ddr"].mean - lb) / lb;
  const bool pass = ddr_vs_lb <= 0.05 && rows["ts-ldr"].gap >= rows["ts-ddr"].gap - 1.0 && r.seconds < 1800.0;
  return {pass, fmt("ts-ddr %.2f%% above the SDDP bound; GAP ts-ddr %.2f%%, ts-ldr %.2f%%, sddp %.2f%%; %.0f s",
                    100 * ddr_vs_lb, rows["ts-ddr"].gap, rows["ts-ldr"].gap, rows["sddp"].gap, r.seconds)};
}

// 6. The T=12 recurrent rule evaluated on a 24-stage horizon.
Outcome time_invariance(const CompareRun& r) {
  if (!r.ok) return {false, r.error};
  const auto ckpt = (r.dir / "ts-ddr" / "checkpoint.json").string();
  const std::string base = "--seed 11 --out \"" + (kWork / "eval12").string() + "\" eval --n-test 200 " + kCaseArgs +
                           " --checkpoint \"" + ckpt + "\"";
  const std::string ext = "--seed 11 --out \"" + (kWork / "eval24").string() + "\" eval --n-test 200 --horizon 24 " +
                          kCaseArgs + " --checkpoint \"" + ckpt + "\"";
  const int rc12 = run(base, kWork / "eval12.log"), rc24 = run(ext, kWork / "eval24.log");
  const auto e12 = read_csv(kWork / "eval12" / "eval.csv"), e24 = read_csv(kWork / "eval24" / "eval.csv");
  if (e12.size() < 2 || e24.size() < 2) return {false, "eval did not write eval.csv"};
  const double per12 = std::stod(e12[1][2]) / 12.0, per24 = std::stod(e24[1][2]) / 24.0;
  const int failed = std::stoi(e24[1][5]);
  const double rel = std::abs(per24 - per12) / per12;
  return {rc12 == 0 && rc24 == 0 && failed == 0 && rel <= 0.25,
          fmt("per-stage cost %.6g at T=12, %.6g at T=24 (%.1f%% apart), %d failures", per12, per24, 100 * rel,
              failed)};
}

// 7. Per-decision inference time of the recurrent rule against an SDDP stage solve.
Outcome inference_speed(const CompareRun& r) {
  if (!r.ok) return {false, r.error};
  const auto meta = nlohmann::json::parse(slurp(r.dir / "compare_meta.json"));
  double ddr = 0.0, sddp = 0.0;
  for (const auto& row : meta.at("rows")) {
    if (row.at("model") == "ts-ddr") ddr = row.at("seconds_per_decision").get<double>();
    if (row.at("model") == "sddp") sddp = row.at("seconds_per_decision").get<double>();
  }
  return {ddr > 0.0 && sddp > 0.0 && ddr <= sddp / 100.0,
          fmt("ts-ddr %.3e s, sddp %.3e s per decision (ratio %.0f)", ddr, sddp, ddr > 0 ? sddp / ddr : 0.0)};
}

// 9. A second identical compare run reproduces every CSV byte for byte.
Outcome determinism(const CompareRun& a) {
  if (!a.ok) return {false, a.error};
  const auto b = compare_run("run2");
  if (!b.ok) return {false, b.error};
  std::vector<std::string> differ;
  for (const auto* rel : {"compare.csv", "eval.csv", "sddp/cuts.csv", "ts-ddr/checkpoint.json",
                          "ts-ldr/checkpoint.json"})
    if (slurp(a.dir / rel) != slurp(b.dir / rel) || slurp(a.dir / rel).empty()) differ.push_back(rel);
  for (const auto* rel : {"ts-ddr/curve.csv", "ts-ldr/curve.csv"})
    if (drop_last_column(slurp(a.dir / rel)) != drop_last_column(slurp(b.dir / rel))) differ.push_back(rel);
  std::string list;
  for (const auto& d : differ) list += " " + d;
  return {differ.empty(), differ.empty() ? std::string("compare.csv, eval.csv, cuts.csv and checkpoints identical; "
                                                       "curve.csv identical apart from its wall-clock column")
                                         : "differing:" + list};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn, double budget) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget > 0 && s > budget) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", budget);
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << ": " << o.detail
              << fmt("  (%.1f s)", s) << std::endl;
  };

  report(1, "dual-gradient law", dual_gradient_law, 300);
  report(2, "end-to-end gradient", end_to_end_gradient, 300);
  report(3, "subgradient inequality", subgradient_inequality, 0);
  report(4, "SDDP exactness", sddp_exactness, 600);
  report(8, "relatively complete recourse", complete_recourse, 0);

  CompareRun first;
  if (run("--seed 7 --out \"" + (kWork / "case").string() + "\" synth-case --hydros 2 --horizon 12 --points 3",
          kWork / "synth.log") == 0)
    first = compare_run("run1");
  else
    first.error = "synth-case failed";
  report(5, "policy ranking against SDDP", [&] { return comparison_shape(first); }, 0);
  report(6, "time-invariance generalization", [&] { return time_invariance(first); }, 0);
  report(7, "inference speed ordering", [&] { return inference_speed(first); }, 0);
  report(9, "determinism", [&] { return determinism(first); }, 0);

  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
