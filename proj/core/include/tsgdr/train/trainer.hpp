#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/policy/policy.hpp"
#include "tsgdr/train/adam.hpp"

namespace tsgdr::train {

struct TrainConfig {
  int epochs = 100;            // Adam steps, one sampled batch each
  std::size_t batch = 32;
  AdamConfig adam;
  std::optional<double> penalty;  // C^delta; case default when unset
  int loss_cuts = 11;
  std::uint64_t seed = 0;
  std::size_t n_val = 100;     // 0 disables validation and early stopping
  std::size_t n_test = 100;    // historical mode: rows withheld from training
  int eval_every = 1;
  int patience = 10;           // evaluations without improvement
  int latent_dim = 16;
  std::vector<int> hidden{64, 64};
  bool squash = true;
  double max_failure_fraction = 0.2;
  int workers = 1;
  lp::SolverOptions solver;

  void check() const;
  /// FNV-1a over the canonical text of every field that changes the result
  /// (workers excluded).
  std::uint64_t hash() const;
  lthd::SecondStageOptions second_stage() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // batch mean Q before the step; NaN at epoch 0
  double val_mean = 0.0;    // NaN when not evaluated
  double val_std = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;     // cumulative wall clock
  std::size_t failed = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val = 0.0;
  std::size_t solver_failures = 0;
  std::size_t skipped_updates = 0;
  bool early_stopped = false;
  double seconds = 0.0;
};

struct TrainResult {
  policy::PolicyParams params;  // best validation parameters (last when n_val = 0)
  TrainReport report;
};

/// Spec for `kind` on this case with the network shape taken from config.
policy::PolicySpec make_spec(policy::PolicyKind kind, const model::GridCase& grid,
                             const scenario::ScenarioSet& set, const TrainConfig& config);

/// Samples a batch per epoch, solves Q(w, pi(w)) per path, chains the target
/// duals through the policy and takes an Adam descent step on the batch mean.
/// Epoch 0 only evaluates the initial policy. Throws Error when more than
/// max_failure_fraction of an epoch's solves fail.
TrainResult train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                  policy::PolicyParams initial, const TrainConfig& config);
TrainResult train(const model::GridCase& grid, const scenario::ScenarioSet& set,
                  policy::PolicyKind kind, const TrainConfig& config);

/// Policy cost on fixed paths; parameters are not touched.
lthd::EvalSummary validate(const policy::PolicyParams& params, const model::GridCase& grid,
                           const std::vector<scenario::ScenarioPath>& paths,
                           const lthd::EvalOptions& options);

/// The policy as a target map, starting from the case's initial volumes.
lthd::TargetPolicy as_target_policy(const policy::PolicyParams& params, const model::GridCase& grid);

void write_curve_csv(const TrainReport& report, const std::filesystem::path& path);
std::string dump_train_report(const TrainReport& report, const TrainConfig& config,
                              const std::string& kind);

}  // namespace tsgdr::train
