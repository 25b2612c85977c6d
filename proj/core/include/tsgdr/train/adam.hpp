#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace tsgdr::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws ValidationError unless lr >= 0, 0 < beta < 1 and epsilon > 0.
  void check() const;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  std::size_t skipped = 0;  // updates refused because of non-finite gradients

  explicit AdamState(Eigen::Index size = 0)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

/// One bias-corrected Adam step that descends `grad`. A gradient with any
/// non-finite entry leaves theta and the moments untouched and returns false.
bool adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& config);

}  // namespace tsgdr::train
