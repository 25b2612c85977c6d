#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsgdr/bench/compare.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/logging.hpp"
#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"
#include "tsgdr/sddp/sddp.hpp"
#include "tsgdr/train/gradcheck.hpp"
#include "tsgdr/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace tsgdr;
using nlohmann::json;

namespace {

struct Global {
  std::uint64_t seed = 0;
  int workers = 1;
  fs::path out = ".";
  fs::path dump_lp;
  bool no_squash = false;
};

struct Inputs {
  fs::path case_path;
  fs::path scenario_path;
};

struct TrainFlags {
  int epochs = 100;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::size_t n_val = 100;
  int eval_every = 1;
  int patience = 10;
  int latent_dim = 16;
  std::vector<int> hidden{64, 64};
  std::optional<double> penalty;
  int loss_cuts = 11;
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void add_inputs(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--case", in.case_path, "Case JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--scenarios", in.scenario_path, "Scenario CSV (lattice or historical)")
      ->required()
      ->check(CLI::ExistingFile);
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Adam steps")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Paths per step")->capture_default_str();
  cmd->add_option("--lr", f.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--n-val", f.n_val, "Validation paths (0 disables)")->capture_default_str();
  cmd->add_option("--eval-every", f.eval_every, "Epochs between validations")->capture_default_str();
  cmd->add_option("--patience", f.patience, "Evaluations without improvement")->capture_default_str();
  cmd->add_option("--latent", f.latent_dim, "Recurrent state width")->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  cmd->add_option("--penalty", f.penalty, "Target deviation cost per hm3 (case default when unset)");
  cmd->add_option("--loss-cuts", f.loss_cuts, "Tangent cuts per line-loss curve")->capture_default_str();
}

train::TrainConfig make_config(const Global& g, const TrainFlags& f, std::size_t n_test) {
  train::TrainConfig c;
  c.epochs = f.epochs;
  c.batch = f.batch;
  c.adam.learning_rate = f.learning_rate;
  c.penalty = f.penalty;
  c.loss_cuts = f.loss_cuts;
  c.seed = g.seed;
  c.n_val = f.n_val;
  c.n_test = n_test;
  c.eval_every = f.eval_every;
  c.patience = f.patience;
  c.latent_dim = f.latent_dim;
  c.hidden = f.hidden;
  c.squash = !g.no_squash;
  c.workers = g.workers;
  c.check();
  return c;
}

lthd::SecondStageOptions second_stage(const Global& g, const train::TrainConfig& c) {
  auto s = c.second_stage();
  s.dump_dir = g.dump_lp;
  return s;
}

struct Loaded {
  model::GridCase grid;
  scenario::ScenarioSet set;
};

Loaded load(const Inputs& in) {
  Loaded l{model::load_case(in.case_path), {}};
  l.set = scenario::load_scenarios(in.scenario_path, l.grid.n_hydros(), l.grid.horizon);
  scenario::check_compatible(l.set, l.grid);
  return l;
}

std::string plan_for(const Loaded& l, std::size_t n_test, std::uint64_t seed) {
  return bench::plan_name(model::case_hash(l.grid), scenario::scenario_hash(l.set), n_test, l.grid.horizon,
                          seed);
}

std::string model_meta(const bench::ModelResult& r, std::uint64_t case_hash) {
  return json{{"model", r.model},
              {"plan", r.plan},
              {"case_hash", hex(case_hash)},
              {"n_paths", r.costs.size()},
              {"n_failed", r.n_failed},
              {"train_seconds", r.train_seconds},
              {"seconds_per_decision", r.seconds_per_decision}}
      .dump(1);
}

void write_model_artifacts(const fs::path& dir, const train::TrainResult& result, const train::TrainConfig& cfg,
                           const model::GridCase& grid) {
  fs::create_directories(dir);
  policy::save_checkpoint({result.params, cfg.seed, cfg.hash(), model::case_hash(grid)}, dir / "checkpoint.json");
  bench::write_text(dir / "train_report.json",
                    train::dump_train_report(result.report, cfg, policy::to_string(result.params.spec.kind)) + "\n");
  train::write_curve_csv(result.report, dir / "curve.csv");
}

int cmd_synth(const Global& g, int buses, int hydros, int horizon, int points, double spread,
              std::size_t historical) {
  const auto grid = model::synthesize_case(buses, hydros, g.seed, horizon);
  const auto set = historical > 0 ? scenario::synthesize_historical(grid, historical, g.seed)
                                  : scenario::synthesize_lattice(grid, points, g.seed, spread);
  fs::create_directories(g.out);
  model::save_case(grid, g.out / "case.json");
  scenario::save_scenarios(set, g.out / "scenarios.csv");
  std::cout << "wrote " << (g.out / "case.json").string() << " and " << (g.out / "scenarios.csv").string()
            << "\n";
  return 0;
}

int cmd_train(const Global& g, const Inputs& in, const std::string& kind, const TrainFlags& f,
              std::size_t n_test) {
  const auto l = load(in);
  const auto cfg = make_config(g, f, n_test);
  const auto result = train::train(l.grid, l.set, policy::parse_policy_kind(kind), cfg);
  write_model_artifacts(g.out, result, cfg, l.grid);
  std::cout << policy::to_string(result.params.spec.kind) << ": best epoch " << result.report.best_epoch
            << ", validation cost " << result.report.best_val << ", " << result.report.seconds << " s\n";
  return 0;
}

int cmd_eval(const Global& g, const Inputs& in, const fs::path& checkpoint_path, std::size_t n_test,
             int horizon, std::optional<double> penalty, int loss_cuts) {
  auto l = load(in);
  const auto checkpoint = policy::load_checkpoint(checkpoint_path);
  const auto hash = model::case_hash(l.grid);
  if (checkpoint.case_hash != hash)
    throw ValidationError("checkpoint was trained on case " + hex(checkpoint.case_hash) + ", not " + hex(hash));
  if (horizon > 0 && horizon != l.grid.horizon) {
    l.grid = model::with_horizon(l.grid, horizon);
    l.set = scenario::with_horizon(l.set, horizon);
  }
  train::TrainConfig cfg;
  cfg.penalty = penalty;
  cfg.loss_cuts = loss_cuts;
  lthd::EvalOptions options{second_stage(g, cfg), g.workers};
  const auto paths = scenario::test_paths(l.set, n_test, g.seed);
  const auto result = bench::evaluate_params(checkpoint.params, l.grid, paths, plan_for(l, n_test, g.seed), options);
  fs::create_directories(g.out);
  bench::write_text(g.out / "eval.csv", bench::eval_csv({result}));
  bench::write_text(g.out / "eval_meta.json", model_meta(result, hash) + "\n");
  std::cout << result.model << ": " << result.mean_cost << " +- " << result.std_cost << " over " << paths.size()
            << " paths (" << result.n_failed << " failed), " << result.seconds_per_decision
            << " s per decision\n";
  return result.n_failed == 0 ? 0 : 3;
}

sddp::SddpOptions sddp_options(const Global& g, int iterations) {
  sddp::SddpOptions o;
  o.iterations = iterations;
  o.seed = g.seed;
  o.workers = g.workers;
  return o;
}

int cmd_sddp(const Global& g, const Inputs& in, int iterations, std::size_t n_test) {
  const auto l = load(in);
  const auto options = sddp_options(g, iterations);
  const auto state = sddp::sddp_train(l.grid, l.set, options);
  fs::create_directories(g.out);
  sddp::write_cuts_csv(state, g.out / "cuts.csv");
  std::optional<bench::ModelResult> result;
  sddp::SimulationSummary sim;
  if (n_test > 0) {
    const auto paths = scenario::test_paths(l.set, n_test, g.seed);
    sim = sddp::simulate(state, l.grid, paths, options);
    result = bench::sddp_result(state, sim, plan_for(l, n_test, g.seed));
    bench::write_text(g.out / "eval.csv", bench::eval_csv({*result}));
    bench::write_text(g.out / "eval_meta.json", model_meta(*result, model::case_hash(l.grid)) + "\n");
  }
  bench::write_text(g.out / "sddp_report.json", sddp::dump_sddp_report(state, result ? &sim : nullptr) + "\n");
  std::cout << "sddp: lower bound " << state.lower_bounds.back() << " after " << state.iterations
            << " iterations";
  if (result) std::cout << ", simulated " << result->mean_cost << " +- " << result->std_cost;
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(const Global& g, const Inputs& in, const std::string& kind, const fs::path& checkpoint_path,
                  std::size_t n_paths, train::GradcheckOptions options, const TrainFlags& f) {
  const auto l = load(in);
  const auto cfg = make_config(g, f, 0);
  policy::PolicyParams params;
  if (!checkpoint_path.empty()) {
    params = policy::load_checkpoint(checkpoint_path).params;
  } else {
    params = policy::init_params(train::make_spec(policy::parse_policy_kind(kind), l.grid, l.set, cfg), g.seed);
  }
  options.seed = g.seed;
  options.second_stage = second_stage(g, cfg);
  const auto paths = scenario::sample_paths(l.set, n_paths, mix_seed(g.seed, 21));
  json coords = json::array();
  std::size_t passed = 0, checked = 0, kinks = 0, failed_solves = 0;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    auto o = options;
    o.seed = mix_seed(g.seed, 100 + p);
    const auto report = train::gradcheck(l.grid, paths[p], params, o);
    kinks += report.n_kink;
    failed_solves += report.n_failed_solves;
    for (const auto& c : report.coordinates) {
      coords.push_back({{"path", p},
                        {"coordinate", c.coordinate},
                        {"analytic", c.analytic},
                        {"finite_difference", c.finite_difference},
                        {"relative_error", c.relative_error},
                        {"kink", c.kink},
                        {"pass", c.pass}});
      if (c.kink) continue;
      ++checked;
      if (c.pass) ++passed;
    }
  }
  const double rate = checked > 0 ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0;
  fs::create_directories(g.out);
  bench::write_text(g.out / "gradcheck.json",
                    json{{"model", policy::to_string(params.spec.kind)},
                         {"tolerance", options.tolerance},
                         {"step", options.step},
                         {"pass_rate", rate},
                         {"checked", checked},
                         {"kinks", kinks},
                         {"failed_solves", failed_solves},
                         {"coordinates", coords}}
                            .dump(1) +
                        "\n");
  std::cout << "gradcheck: " << passed << "/" << checked << " coordinates agree (" << kinks
            << " kink-adjacent skipped)\n";
  return rate >= 0.9 ? 0 : 2;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  return cells;
}

std::vector<bench::ModelResult> read_eval(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "model,plan,mean_cost,std_cost,max_dev,n_failed")
    throw ParseError(path.string() + ": not an eval.csv");
  json meta;
  if (std::ifstream m(path.parent_path() / "eval_meta.json"); m) meta = json::parse(m, nullptr, false);
  std::vector<bench::ModelResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 6) throw ParseError(path.string() + ": malformed row '" + line + "'");
    bench::ModelResult r;
    r.model = c[0];
    r.plan = c[1];
    try {
      r.mean_cost = std::stod(c[2]);
      r.std_cost = std::stod(c[3]);
      r.max_deviation = std::stod(c[4]);
      r.n_failed = std::stoul(c[5]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": malformed row '" + line + "'");
    }
    if (meta.is_object() && meta.value("model", "") == r.model) {
      r.train_seconds = meta.value("train_seconds", 0.0);
      r.seconds_per_decision = meta.value("seconds_per_decision", 0.0);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void emit_compare(const Global& g, const bench::CompareReport& report) {
  fs::create_directories(g.out);
  bench::write_text(g.out / "compare.csv", bench::compare_csv(report));
  bench::write_text(g.out / "compare.txt", bench::compare_table(report));
  bench::write_text(g.out / "compare_meta.json", bench::compare_metadata(report) + "\n");
  std::cout << bench::compare_table(report);
}

int cmd_compare(const Global& g, const Inputs& in, const std::vector<fs::path>& inputs,
                const std::vector<std::string>& models, const TrainFlags& f, int iterations, std::size_t n_test) {
  if (!inputs.empty()) {
    std::vector<bench::ModelResult> results;
    for (const auto& path : inputs)
      for (auto& r : read_eval(path)) results.push_back(std::move(r));
    emit_compare(g, bench::make_compare(std::move(results)));
    return 0;
  }
  if (in.case_path.empty() || in.scenario_path.empty())
    throw ValidationError("compare needs --case and --scenarios, or --inputs");
  const auto l = load(in);
  const auto plan = plan_for(l, n_test, g.seed);
  const auto test = scenario::test_paths(l.set, n_test, g.seed);
  const auto cfg = make_config(g, f, n_test);
  std::vector<bench::ModelResult> results;
  for (const auto& name : models) {
    if (name == "sddp") {
      const auto options = sddp_options(g, iterations);
      const auto state = sddp::sddp_train(l.grid, l.set, options);
      const auto dir = g.out / "sddp";
      fs::create_directories(dir);
      sddp::write_cuts_csv(state, dir / "cuts.csv");
      bench::write_text(dir / "sddp_report.json", sddp::dump_sddp_report(state) + "\n");
      results.push_back(bench::evaluate_sddp(state, l.grid, test, plan, options));
    } else {
      const auto kind = policy::parse_policy_kind(name);
      const auto trained = train::train(l.grid, l.set, kind, cfg);
      write_model_artifacts(g.out / policy::to_string(kind), trained, cfg, l.grid);
      auto r = bench::evaluate_params(trained.params, l.grid, test, plan,
                                      lthd::EvalOptions{second_stage(g, cfg), g.workers});
      r.train_seconds = trained.report.seconds;
      results.push_back(std::move(r));
    }
    log::info("compare: finished " + name);
  }
  fs::create_directories(g.out);
  bench::write_text(g.out / "eval.csv", bench::eval_csv(results));
  emit_compare(g, bench::make_compare(std::move(results)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage deep decision rules for hydrothermal scheduling"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--dump-lp", g.dump_lp, "Write every second-stage LP to this directory");
  app.add_flag("--no-squash", g.no_squash, "Affine instead of sigmoid output map for the recurrent rule");

  Inputs in;
  TrainFlags tf;

  auto* synth = app.add_subcommand("synth-case", "Write a synthetic case and scenario file");
  int buses = 3, hydros = 2, horizon = 12, points = 3;
  double spread = 0.5;
  std::size_t historical = 0;
  synth->add_option("--buses", buses)->capture_default_str();
  synth->add_option("--hydros", hydros)->capture_default_str();
  synth->add_option("--horizon", horizon)->capture_default_str();
  synth->add_option("--points", points, "Lattice realizations per stage")->capture_default_str();
  synth->add_option("--spread", spread, "Lattice spread around the mean")->capture_default_str();
  synth->add_option("--historical", historical, "Write this many historical paths instead of a lattice");

  auto* train_cmd = app.add_subcommand("train", "Train a decision rule");
  std::string kind = "ts-ddr";
  std::size_t n_test = 100;
  add_inputs(train_cmd, in);
  train_cmd->add_option("--model", kind, "ts-ddr or ts-ldr")->capture_default_str();
  train_cmd->add_option("--n-test", n_test, "Historical rows withheld for testing")->capture_default_str();
  add_train_flags(train_cmd, tf);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out paths");
  fs::path checkpoint;
  int eval_horizon = 0;
  std::size_t eval_n = 1000;
  add_inputs(eval_cmd, in);
  eval_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--n-test", eval_n, "Test paths")->capture_default_str();
  eval_cmd->add_option("--horizon", eval_horizon, "Evaluate on a cyclically extended horizon");
  eval_cmd->add_option("--penalty", tf.penalty, "Target deviation cost per hm3");
  eval_cmd->add_option("--loss-cuts", tf.loss_cuts)->capture_default_str();

  auto* sddp_cmd = app.add_subcommand("sddp", "Train and simulate the SDDP baseline");
  int iterations = 50;
  std::size_t sddp_n = 100;
  add_inputs(sddp_cmd, in);
  sddp_cmd->add_option("--iterations", iterations)->capture_default_str();
  sddp_cmd->add_option("--n-test", sddp_n, "Simulation paths (0 skips)")->capture_default_str();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare the dual gradient with finite differences");
  train::GradcheckOptions gopt;
  std::size_t grad_paths = 1;
  add_inputs(grad_cmd, in);
  grad_cmd->add_option("--model", kind)->capture_default_str();
  grad_cmd->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  grad_cmd->add_option("--coords", gopt.n_coords, "Coordinates per path")->capture_default_str();
  grad_cmd->add_option("--step", gopt.step)->capture_default_str();
  grad_cmd->add_option("--tol", gopt.tolerance)->capture_default_str();
  grad_cmd->add_option("--paths", grad_paths)->capture_default_str();
  add_train_flags(grad_cmd, tf);

  auto* cmp_cmd = app.add_subcommand("compare", "Train and test several models on one test set");
  std::vector<std::string> models{"ts-ddr", "ts-ldr", "sddp"};
  std::vector<fs::path> inputs;
  std::size_t cmp_n = 100;
  cmp_cmd->add_option("--case", in.case_path)->check(CLI::ExistingFile);
  cmp_cmd->add_option("--scenarios", in.scenario_path)->check(CLI::ExistingFile);
  cmp_cmd->add_option("--models", models)->delimiter(',')->capture_default_str();
  cmp_cmd->add_option("--inputs", inputs, "Merge existing eval.csv files instead of running")
      ->check(CLI::ExistingFile);
  cmp_cmd->add_option("--iterations", iterations, "SDDP iterations")->capture_default_str();
  cmp_cmd->add_option("--n-test", cmp_n)->capture_default_str();
  add_train_flags(cmp_cmd, tf);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(g, buses, hydros, horizon, points, spread, historical);
    if (train_cmd->parsed()) return cmd_train(g, in, kind, tf, n_test);
    if (eval_cmd->parsed()) return cmd_eval(g, in, checkpoint, eval_n, eval_horizon, tf.penalty, tf.loss_cuts);
    if (sddp_cmd->parsed()) return cmd_sddp(g, in, iterations, sddp_n);
    if (grad_cmd->parsed()) return cmd_gradcheck(g, in, kind, checkpoint, grad_paths, gopt, tf);
    if (cmp_cmd->parsed()) return cmd_compare(g, in, inputs, models, tf, iterations, cmp_n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
