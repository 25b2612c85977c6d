#include <cmath>

#include "tsgdr/error.hpp"
#include "tsgdr/train/adam.hpp"

namespace tsgdr::train {

void AdamConfig::check() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("adam: learning rate must be finite and >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ValidationError("adam: betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("adam: epsilon must be > 0");
}

bool adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& config) {
  if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size())
    throw DimensionError("adam: gradient, state and parameters differ in size");
  if (!grad.allFinite()) {
    ++state.skipped;
    return false;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  theta.array() -= config.learning_rate * (state.m.array() / c1) /
                   ((state.v.array() / c2).sqrt() + config.epsilon);
  return true;
}

}  // namespace tsgdr::train
