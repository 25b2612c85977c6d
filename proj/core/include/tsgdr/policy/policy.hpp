#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/model/case.hpp"
#include "tsgdr/scenario/scenarios.hpp"

namespace tsgdr::policy {

enum class PolicyKind { ddr, ldr };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

/// Shapes and normalization shared by both policy kinds.
///
/// Inflows enter both rules as w / inflow_scale. The recurrent rule sees the
/// initial volume as 2 (x0 - v_min) / (v_max - v_min) - 1, the linear rule
/// as x0 / v_max.
struct PolicySpec {
  PolicyKind kind = PolicyKind::ddr;
  std::size_t n_hydros = 0;
  Eigen::VectorXd v_min, v_max, inflow_scale;

  // recurrent rule
  int latent_dim = 16;
  std::vector<int> hidden{64, 64};
  /// Map the target head through v_min + (v_max - v_min) sigmoid(.). When
  /// false the head is affine: mid + half_range * head.
  bool squash = true;

  // linear rule: one coefficient matrix per stage
  int horizon = 0;

  /// Spec for a case, with inflow_scale the mean stage inflow of `set`
  /// (v_max where that is zero).
  static PolicySpec for_case(PolicyKind kind, const model::GridCase& grid,
                             const scenario::ScenarioSet& set);

  /// DDR layer widths: input, hidden..., output.
  std::vector<int> layer_sizes() const;
  std::size_t n_parameters() const;
  void check() const;
  bool operator==(const PolicySpec&) const;
};

/// All parameters as one flat vector, laid out layer by layer (DDR: W_n
/// column-major then b_n) or stage by stage (LDR: theta_t column-major).
struct PolicyParams {
  PolicySpec spec;
  Eigen::VectorXd theta;
};

/// Deterministic seeded initialization. DDR: Xavier-uniform weights, zero
/// biases. LDR: each stage selects the normalized initial volume, so the rule
/// starts at x_hat_t = v0; inflow coefficients are zero.
PolicyParams init_params(const PolicySpec& spec, std::uint64_t seed);

/// Cached forward pass of the recurrent rule.
struct RolloutTape {
  /// activations[t][n]: input of layer n at stage t (normalized input first).
  std::vector<std::vector<Eigen::VectorXd>> activations;
  /// Target head before the output map, per stage.
  std::vector<Eigen::VectorXd> head;
  /// latent[0] = 0, latent[t] = state after stage t.
  std::vector<Eigen::VectorXd> latent;
  Eigen::MatrixXd targets;

  int horizon() const { return static_cast<int>(head.size()); }
};

/// Stage 1 sees (x0, latent 0, flag 1) with inflow slots zeroed; stage t >= 2
/// sees (w_t, latent t-1, flag 0) with x0 slots zeroed. Any path length works.
RolloutTape ddr_forward(const PolicyParams& params, const scenario::ScenarioPath& path,
                        const Eigen::VectorXd& x0);

/// Gradient of L(theta) = sum_t lambda_t . x_hat_t(theta) with lambda held
/// constant, by back-propagation through time.
Eigen::VectorXd ddr_backward(const PolicyParams& params, const RolloutTape& tape,
                             const Eigen::MatrixXd& lambda);

/// x_hat_t = v_max .* (theta_t s_t) with s_t = [w_2..w_t, x0] normalized;
/// theta_t is n_hydros x (t n_hydros).
/// The path horizon must not exceed spec.horizon.
Eigen::MatrixXd ldr_forward(const PolicyParams& params, const scenario::ScenarioPath& path,
                            const Eigen::VectorXd& x0);

/// d/dtheta_t of sum_t lambda_t . x_hat_t = (v_max .* lambda_t) s_t'.
Eigen::VectorXd ldr_backward(const PolicyParams& params, const scenario::ScenarioPath& path,
                             const Eigen::VectorXd& x0, const Eigen::MatrixXd& lambda);

/// Policy-kind dispatch: a forward pass with whatever the backward needs.
struct Rollout {
  Eigen::MatrixXd targets;
  RolloutTape tape;  // recurrent rule only
};

Rollout rollout(const PolicyParams& params, const scenario::ScenarioPath& path,
                const Eigen::VectorXd& x0);
Eigen::VectorXd vjp(const PolicyParams& params, const Rollout& forward,
                    const scenario::ScenarioPath& path, const Eigen::VectorXd& x0,
                    const Eigen::MatrixXd& lambda);

/// Inference only: same targets as rollout() without recording a tape.
Eigen::MatrixXd ddr_targets(const PolicyParams& params, const scenario::ScenarioPath& path,
                            const Eigen::VectorXd& x0);
Eigen::MatrixXd targets(const PolicyParams& params, const scenario::ScenarioPath& path,
                        const Eigen::VectorXd& x0);

struct Checkpoint {
  PolicyParams params;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t case_hash = 0;
};

std::string dump_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& json_text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsgdr::policy
