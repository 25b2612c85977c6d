#include "tsgdr/error.hpp"
#include "tsgdr/policy/policy.hpp"

namespace tsgdr::policy {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double safe_scale(double v) { return v > 0.0 ? v : 1.0; }

void check_ldr(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  if (params.theta.size() != static_cast<Index>(spec.n_parameters()))
    throw DimensionError("policy: parameter vector does not match its spec");
  if (path.inflows.cols() != n || x0.size() != n)
    throw DimensionError("policy: path or x0 width does not match n_hydros");
  if (path.horizon() > spec.horizon)
    throw DimensionError("linear rule: path has " + std::to_string(path.horizon()) +
                         " stages but the rule covers " + std::to_string(spec.horizon));
}

/// s_t for all stages at once: column block k < t-1 is w_{k+2}, the last is x0.
VectorXd history(const PolicySpec& spec, const scenario::ScenarioPath& path, const VectorXd& x0,
                 int t) {
  const auto n = static_cast<Index>(spec.n_hydros);
  VectorXd s(static_cast<Index>(t) * n);
  for (int k = 1; k < t; ++k)
    s.segment(static_cast<Index>(k - 1) * n, n) =
        path.inflows.row(k).transpose().cwiseQuotient(spec.inflow_scale);
  for (Index j = 0; j < n; ++j) s(static_cast<Index>(t - 1) * n + j) = x0(j) / safe_scale(spec.v_max(j));
  return s;
}

}  // namespace

MatrixXd ldr_forward(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  check_ldr(params, path, x0);
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  MatrixXd targets(path.horizon(), n);
  Index offset = 0;
  for (int t = 1; t <= path.horizon(); ++t) {
    const Index cols = static_cast<Index>(t) * n;
    Eigen::Map<const MatrixXd> coef(params.theta.data() + offset, n, cols);
    offset += n * cols;
    const VectorXd raw = coef * history(spec, path, x0, t);
    for (Index j = 0; j < n; ++j) targets(t - 1, j) = safe_scale(spec.v_max(j)) * raw(j);
  }
  return targets;
}

VectorXd ldr_backward(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0,
                      const MatrixXd& lambda) {
  check_ldr(params, path, x0);
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  if (lambda.rows() != path.horizon() || lambda.cols() != n)
    throw DimensionError("ldr_backward: lambda must be horizon x n_hydros");
  VectorXd grad = VectorXd::Zero(params.theta.size());
  Index offset = 0;
  for (int t = 1; t <= path.horizon(); ++t) {
    const Index cols = static_cast<Index>(t) * n;
    Eigen::Map<MatrixXd> g(grad.data() + offset, n, cols);
    offset += n * cols;
    VectorXd weighted(n);
    for (Index j = 0; j < n; ++j) weighted(j) = safe_scale(spec.v_max(j)) * lambda(t - 1, j);
    g.noalias() = weighted * history(spec, path, x0, t).transpose();
  }
  return grad;
}

}  // namespace tsgdr::policy
