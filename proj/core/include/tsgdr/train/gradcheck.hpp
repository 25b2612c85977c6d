#pragma once

#include <cstdint>
#include <vector>

#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/policy/policy.hpp"

namespace tsgdr::train {

struct GradcheckOptions {
  std::size_t n_coords = 20;
  double step = 1e-4;           // central difference step on theta
  double tolerance = 1e-2;      // relative agreement required
  /// A coordinate is kink-adjacent when lambda at theta +- step differs from
  /// lambda at theta by more than jump_tolerance * max(1, |lambda|_inf).
  double jump_tolerance = 1e-6;
  /// Relative rounding level of Q. A coordinate passes when
  /// |analytic - fd| <= tolerance * max(|analytic|, |fd|) + noise * |Q| / step,
  /// the second term being the rounding error of the central difference.
  double noise = 1e-13;
  std::uint64_t seed = 0;
  lthd::SecondStageOptions second_stage;
};

struct CoordinateCheck {
  Eigen::Index coordinate = 0;
  double analytic = 0.0;
  double finite_difference = 0.0;
  double relative_error = 0.0;
  bool kink = false;
  bool pass = false;
};

struct GradcheckReport {
  double cost = 0.0;
  std::vector<CoordinateCheck> coordinates;
  std::size_t n_kink = 0;
  std::size_t n_failed_solves = 0;
  /// Passing share of the non-kink coordinates (1 when all are kinks).
  double pass_rate = 0.0;
};

/// Compares the duals-times-VJP gradient of theta -> Q(w, pi_theta(w)) with
/// central differences of the same end-to-end map on random coordinates.
/// When `lambda_override` is given it replaces the extracted duals.
GradcheckReport gradcheck(const model::GridCase& grid, const scenario::ScenarioPath& path,
                          const policy::PolicyParams& params, const GradcheckOptions& options = {},
                          const Eigen::MatrixXd* lambda_override = nullptr);

}  // namespace tsgdr::train
