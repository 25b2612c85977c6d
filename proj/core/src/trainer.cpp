#include "tsgdr/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/hash.hpp"
#include "tsgdr/logging.hpp"
#include "tsgdr/parallel.hpp"

namespace tsgdr::train {

using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void TrainConfig::check() const {
  if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (batch < 1) throw ValidationError("train: batch must be >= 1");
  adam.check();
  if (penalty && !(*penalty > 0.0)) throw ValidationError("train: penalty must be > 0");
  if (loss_cuts < 1) throw ValidationError("train: loss_cuts must be >= 1");
  if (eval_every < 1) throw ValidationError("train: eval_every must be >= 1");
  if (patience < 1) throw ValidationError("train: patience must be >= 1");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
    throw ValidationError("train: max_failure_fraction must lie in [0, 1]");
}

std::uint64_t TrainConfig::hash() const {
  std::ostringstream s;
  s << epochs << ';' << batch << ';' << number(adam.learning_rate) << ';' << number(adam.beta1) << ';'
    << number(adam.beta2) << ';' << number(adam.epsilon) << ';' << (penalty ? number(*penalty) : "default")
    << ';' << loss_cuts << ';' << seed << ';' << n_val << ';' << n_test << ';' << eval_every << ';'
    << patience << ';' << latent_dim << ';';
  for (int h : hidden) s << h << ',';
  s << ';' << squash << ';' << number(max_failure_fraction) << ';' << number(solver.tol) << ';'
    << solver.max_iter << ';' << solver.polish;
  return fnv1a(s.str());
}

lthd::SecondStageOptions TrainConfig::second_stage() const {
  lthd::SecondStageOptions opt;
  opt.build.penalty = penalty;
  opt.build.loss_cuts = loss_cuts;
  opt.solver = solver;
  return opt;
}

policy::PolicySpec make_spec(policy::PolicyKind kind, const model::GridCase& grid,
                             const scenario::ScenarioSet& set, const TrainConfig& config) {
  auto spec = policy::PolicySpec::for_case(kind, grid, set);
  spec.latent_dim = config.latent_dim;
  spec.hidden = config.hidden;
  spec.squash = config.squash;
  return spec;
}

lthd::TargetPolicy as_target_policy(const policy::PolicyParams& params, const model::GridCase& grid) {
  const auto v0 = grid.v0();
  const VectorXd x0 = Eigen::Map<const VectorXd>(v0.data(), static_cast<Eigen::Index>(v0.size()));
  return [params, x0](const scenario::ScenarioPath& path) { return policy::targets(params, path, x0); };
}

lthd::EvalSummary validate(const policy::PolicyParams& params, const model::GridCase& grid,
                           const std::vector<scenario::ScenarioPath>& paths,
                           const lthd::EvalOptions& options) {
  return lthd::evaluate_policy_cost(grid, paths, as_target_policy(params, grid), options);
}

TrainResult train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                  policy::PolicyKind kind, const TrainConfig& config) {
  config.check();
  return train(grid, set, policy::init_params(make_spec(kind, grid, set, config), config.seed), config);
}

TrainResult train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                  policy::PolicyParams initial, const TrainConfig& config) {
  config.check();
  initial.spec.check();
  scenario::check_compatible(set, grid);
  if (initial.spec.n_hydros != grid.n_hydros())
    throw DimensionError("train: policy and case differ in hydro count");
  if (initial.spec.kind == policy::PolicyKind::ldr && initial.spec.horizon < set.horizon())
    throw DimensionError("train: linear rule is shorter than the scenario horizon");

  const auto start = std::chrono::steady_clock::now();
  auto data = scenario::split(set, config.batch, config.n_val, config.n_test, config.seed);
  const auto v0 = grid.v0();
  const VectorXd x0 = Eigen::Map<const VectorXd>(v0.data(), static_cast<Eigen::Index>(v0.size()));
  lthd::EvalOptions eval_opt{config.second_stage(), config.workers};

  TrainResult result{initial, {}};
  policy::PolicyParams params = std::move(initial);
  AdamState adam(params.theta.size());
  TrainReport& report = result.report;
  report.best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  auto evaluate = [&](EpochRecord& rec) {
    const auto summary = validate(params, grid, data.validation, eval_opt);
    rec.val_mean = summary.mean_cost;
    rec.val_std = summary.std_cost;
    report.solver_failures += summary.n_failed;
    if (summary.mean_cost < report.best_val) {
      report.best_val = summary.mean_cost;
      report.best_epoch = rec.epoch;
      result.params = params;
      stale = 0;
    } else {
      ++stale;
    }
  };

  EpochRecord first;
  first.train_loss = kNaN;
  first.val_mean = first.val_std = kNaN;
  if (config.n_val > 0) evaluate(first);
  first.seconds = seconds_since(start);
  report.epochs.push_back(first);

  const std::size_t S = config.batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batch = data.train.next_batch();
    std::vector<double> loss(S, kNaN);
    std::vector<VectorXd> grads(S);
    parallel_for(S, config.workers, [&](std::size_t s) {
      const auto forward = policy::rollout(params, batch[s], x0);
      const auto sol = lthd::solve_second_stage(grid, batch[s], forward.targets, eval_opt.second_stage,
                                                "train_" + std::to_string(epoch) + "_" + std::to_string(s));
      if (!sol.ok) return;
      loss[s] = sol.cost;
      grads[s] = policy::vjp(params, forward, batch[s], x0, sol.lambda);
    });
    EpochRecord rec;
    rec.epoch = epoch;
    rec.val_mean = rec.val_std = kNaN;
    VectorXd grad = VectorXd::Zero(params.theta.size());
    double total = 0.0;
    std::size_t ok = 0;
    for (std::size_t s = 0; s < S; ++s) {
      if (std::isnan(loss[s])) continue;
      total += loss[s];
      grad += grads[s];
      ++ok;
    }
    rec.failed = S - ok;
    report.solver_failures += rec.failed;
    if (static_cast<double>(rec.failed) > config.max_failure_fraction * static_cast<double>(S))
      throw Error("train: " + std::to_string(rec.failed) + " of " + std::to_string(S) +
                  " second-stage solves failed at epoch " + std::to_string(epoch));
    if (rec.failed > 0)
      log::warn("epoch " + std::to_string(epoch) + ": dropped " + std::to_string(rec.failed) + " failed solves");
    if (ok > 0) {
      grad /= static_cast<double>(ok);
      rec.train_loss = total / static_cast<double>(ok);
      rec.grad_norm = grad.norm();
      if (!adam_step(params.theta, grad, adam, config.adam))
        log::warn("epoch " + std::to_string(epoch) + ": non-finite gradient, update skipped");
    } else {
      rec.train_loss = rec.grad_norm = kNaN;
    }
    const bool last = epoch == config.epochs;
    if (config.n_val > 0 && (epoch % config.eval_every == 0 || last)) evaluate(rec);
    rec.seconds = seconds_since(start);
    log::info("epoch " + std::to_string(epoch) + " loss " + number(rec.train_loss) + " val " +
              number(rec.val_mean) + " |g| " + number(rec.grad_norm));
    report.epochs.push_back(rec);
    if (config.n_val > 0 && stale >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }
  report.skipped_updates = adam.skipped;
  if (config.n_val == 0) {
    result.params = params;
    report.best_epoch = report.epochs.back().epoch;
    report.best_val = kNaN;
  }
  report.seconds = seconds_since(start);
  return result;
}

void write_curve_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_mean,val_std,grad_norm,seconds\n";
  for (const auto& r : report.epochs)
    out << r.epoch << ',' << number(r.train_loss) << ',' << number(r.val_mean) << ',' << number(r.val_std)
        << ',' << number(r.grad_norm) << ',' << number(r.seconds) << '\n';
}

std::string dump_train_report(const TrainReport& report, const TrainConfig& config, const std::string& kind) {
  using nlohmann::json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["model"] = kind;
  j["config_hash"] = hex(config.hash());
  j["config"] = {{"epochs", config.epochs},
                 {"batch", config.batch},
                 {"learning_rate", config.adam.learning_rate},
                 {"beta1", config.adam.beta1},
                 {"beta2", config.adam.beta2},
                 {"epsilon", config.adam.epsilon},
                 {"penalty", config.penalty ? json(*config.penalty) : json(nullptr)},
                 {"loss_cuts", config.loss_cuts},
                 {"seed", config.seed},
                 {"n_val", config.n_val},
                 {"eval_every", config.eval_every},
                 {"patience", config.patience},
                 {"latent_dim", config.latent_dim},
                 {"hidden", config.hidden},
                 {"squash", config.squash}};
  j["best_epoch"] = report.best_epoch;
  j["best_val"] = finite_or_null(report.best_val);
  j["solver_failures"] = report.solver_failures;
  j["skipped_updates"] = report.skipped_updates;
  j["early_stopped"] = report.early_stopped;
  j["seconds"] = report.seconds;
  json epochs = json::array();
  for (const auto& r : report.epochs)
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", finite_or_null(r.train_loss)},
                      {"val_mean", finite_or_null(r.val_mean)},
                      {"val_std", finite_or_null(r.val_std)},
                      {"grad_norm", finite_or_null(r.grad_norm)},
                      {"failed", r.failed},
                      {"seconds", r.seconds}});
  j["epochs"] = std::move(epochs);
  return j.dump(1);
}

}  // namespace tsgdr::train
