#include <algorithm>
#include <cmath>

#include "tsgdr/error.hpp"
#include "tsgdr/policy/policy.hpp"
#include "tsgdr/random.hpp"

namespace tsgdr::policy {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(PolicyKind kind) { return kind == PolicyKind::ddr ? "ts-ddr" : "ts-ldr"; }

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "ts-ddr" || name == "ddr") return PolicyKind::ddr;
  if (name == "ts-ldr" || name == "ldr") return PolicyKind::ldr;
  throw ValidationError("unknown policy kind '" + name + "'");
}

namespace {

bool same(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

PolicySpec PolicySpec::for_case(PolicyKind kind, const model::GridCase& grid,
                                const scenario::ScenarioSet& set) {
  PolicySpec spec;
  spec.kind = kind;
  spec.n_hydros = grid.n_hydros();
  const auto n = static_cast<Index>(spec.n_hydros);
  spec.v_min = Eigen::Map<const VectorXd>(grid.v_min().data(), n);
  spec.v_max = Eigen::Map<const VectorXd>(grid.v_max().data(), n);
  spec.horizon = grid.horizon;
  VectorXd mean = VectorXd::Zero(n);
  double count = 0.0;
  if (set.mode() == scenario::Mode::lattice) {
    for (int t = 1; t <= set.horizon(); ++t) {
      for (const auto& node : set.stage_support(t)) mean += node.probability * node.inflow;
      count += 1.0;
    }
  } else {
    for (const auto& p : set.paths()) {
      mean += p.colwise().sum().transpose();
      count += static_cast<double>(p.rows());
    }
  }
  spec.inflow_scale = count > 0.0 ? VectorXd(mean / count) : spec.v_max;
  for (Index j = 0; j < n; ++j)
    if (!(spec.inflow_scale(j) > 0.0)) spec.inflow_scale(j) = spec.v_max(j) > 0.0 ? spec.v_max(j) : 1.0;
  return spec;
}

std::vector<int> PolicySpec::layer_sizes() const {
  const int n = static_cast<int>(n_hydros);
  std::vector<int> sizes{2 * n + 1 + latent_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(n + latent_dim);
  return sizes;
}

std::size_t PolicySpec::n_parameters() const {
  if (kind == PolicyKind::ldr) {
    std::size_t total = 0;
    for (int t = 1; t <= horizon; ++t) total += n_hydros * n_hydros * static_cast<std::size_t>(t);
    return total;
  }
  const auto sizes = layer_sizes();
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    total += static_cast<std::size_t>(sizes[i + 1]) * static_cast<std::size_t>(sizes[i] + 1);
  return total;
}

void PolicySpec::check() const {
  const auto n = static_cast<Index>(n_hydros);
  if (n_hydros == 0) throw ValidationError("policy: case has no hydros");
  if (v_min.size() != n || v_max.size() != n || inflow_scale.size() != n)
    throw DimensionError("policy: bound or scale vectors do not match n_hydros");
  for (Index j = 0; j < n; ++j) {
    if (!(v_min(j) <= v_max(j))) throw ValidationError("policy: v_min > v_max for hydro " + std::to_string(j));
    if (!(inflow_scale(j) > 0.0)) throw ValidationError("policy: inflow scale must be > 0");
  }
  if (kind == PolicyKind::ddr) {
    if (latent_dim < 1) throw ValidationError("policy: latent_dim must be >= 1");
    for (int h : hidden)
      if (h < 1) throw ValidationError("policy: hidden widths must be >= 1");
  } else if (horizon < 1) {
    throw ValidationError("policy: linear rule needs horizon >= 1");
  }
}

bool PolicySpec::operator==(const PolicySpec& o) const {
  return kind == o.kind && n_hydros == o.n_hydros && same(v_min, o.v_min) && same(v_max, o.v_max) &&
         same(inflow_scale, o.inflow_scale) && latent_dim == o.latent_dim && hidden == o.hidden &&
         squash == o.squash && horizon == o.horizon;
}

PolicyParams init_params(const PolicySpec& spec, std::uint64_t seed) {
  spec.check();
  PolicyParams params{spec, VectorXd::Zero(static_cast<Index>(spec.n_parameters()))};
  const auto n = static_cast<Index>(spec.n_hydros);
  if (spec.kind == PolicyKind::ldr) {
    Index offset = 0;
    for (int t = 1; t <= spec.horizon; ++t) {
      const Index cols = static_cast<Index>(t) * n;
      Eigen::Map<MatrixXd> coef(params.theta.data() + offset, n, cols);
      coef.rightCols(n).setIdentity();
      offset += n * cols;
    }
    return params;
  }
  Rng rng(mix_seed(seed, 11));
  const auto sizes = spec.layer_sizes();
  Index offset = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const Index rows = sizes[i + 1], cols = sizes[i];
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Index k = 0; k < rows * cols; ++k) params.theta(offset + k) = rng.uniform(-a, a);
    offset += rows * cols + rows;  // biases stay zero
  }
  return params;
}

namespace {

VectorXd normalized_x0(const PolicySpec& spec, const VectorXd& x0) {
  VectorXd out(x0.size());
  for (Index j = 0; j < x0.size(); ++j) {
    const double range = spec.v_max(j) - spec.v_min(j);
    out(j) = range > 0.0 ? 2.0 * (x0(j) - spec.v_min(j)) / range - 1.0 : 0.0;
  }
  return out;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// tanh through the vectorized exp; saturates cleanly at +-1.
template <typename In, typename Out>
void tanh_into(const In& in, Out&& out) {
  out = 1.0 - 2.0 / ((2.0 * in.array()).exp() + 1.0);
}

void check_inputs(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  const auto n = static_cast<Index>(params.spec.n_hydros);
  if (params.theta.size() != static_cast<Index>(params.spec.n_parameters()))
    throw DimensionError("policy: parameter vector does not match its spec");
  if (path.inflows.cols() != n || x0.size() != n)
    throw DimensionError("policy: path or x0 width does not match n_hydros");
}

}  // namespace

RolloutTape ddr_forward(const PolicyParams& params, const scenario::ScenarioPath& path,
                        const VectorXd& x0) {
  check_inputs(params, path, x0);
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  const Index latent = spec.latent_dim;
  const auto sizes = spec.layer_sizes();
  const std::size_t n_layers = sizes.size() - 1;
  const int T = path.horizon();
  const VectorXd x0n = normalized_x0(spec, x0);

  RolloutTape tape;
  tape.targets.resize(T, n);
  tape.latent.push_back(VectorXd::Zero(latent));
  for (int t = 0; t < T; ++t) {
    VectorXd a(sizes.front());
    a.setZero();
    if (t == 0) {
      a.segment(n, n) = x0n;
      a(2 * n) = 1.0;
    } else {
      a.head(n) = path.inflows.row(t).transpose().cwiseQuotient(spec.inflow_scale);
    }
    a.tail(latent) = tape.latent.back();
    std::vector<VectorXd> acts{a};
    Index offset = 0;
    for (std::size_t i = 0; i < n_layers; ++i) {
      const Index rows = sizes[i + 1], cols = sizes[i];
      Eigen::Map<const MatrixXd> w(params.theta.data() + offset, rows, cols);
      Eigen::Map<const VectorXd> b(params.theta.data() + offset + rows * cols, rows);
      offset += rows * cols + rows;
      VectorXd pre = w * acts.back() + b;
      if (i + 1 < n_layers)
        acts.push_back(pre.array().tanh().matrix());
      else {
        tape.head.push_back(pre.head(n));
        tape.latent.push_back(pre.tail(latent).array().tanh().matrix());
      }
    }
    const VectorXd& head = tape.head.back();
    for (Index j = 0; j < n; ++j) {
      const double range = spec.v_max(j) - spec.v_min(j);
      tape.targets(t, j) = spec.squash ? spec.v_min(j) + range * sigmoid(head(j))
                                       : spec.v_min(j) + 0.5 * range * (1.0 + head(j));
    }
    tape.activations.push_back(std::move(acts));
  }
  return tape;
}

VectorXd ddr_backward(const PolicyParams& params, const RolloutTape& tape, const MatrixXd& lambda) {
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  const Index latent = spec.latent_dim;
  const auto sizes = spec.layer_sizes();
  const std::size_t n_layers = sizes.size() - 1;
  const int T = tape.horizon();
  if (lambda.rows() != T || lambda.cols() != n)
    throw DimensionError("ddr_backward: lambda must be horizon x n_hydros");
  if (params.theta.size() != static_cast<Index>(spec.n_parameters()) ||
      static_cast<int>(tape.activations.size()) != T || static_cast<int>(tape.latent.size()) != T + 1)
    throw DimensionError("ddr_backward: tape does not match the parameters");

  std::vector<Index> offsets;
  Index offset = 0;
  for (std::size_t i = 0; i < n_layers; ++i) {
    offsets.push_back(offset);
    offset += static_cast<Index>(sizes[i + 1]) * sizes[i] + sizes[i + 1];
  }
  VectorXd grad = VectorXd::Zero(params.theta.size());
  VectorXd carry = VectorXd::Zero(latent);  // dL / d latent[t]
  for (int t = T - 1; t >= 0; --t) {
    const auto& acts = tape.activations[static_cast<std::size_t>(t)];
    const VectorXd& head = tape.head[static_cast<std::size_t>(t)];
    const VectorXd& ell = tape.latent[static_cast<std::size_t>(t + 1)];
    VectorXd d_out(n + latent);
    for (Index j = 0; j < n; ++j) {
      const double range = spec.v_max(j) - spec.v_min(j);
      const double slope = spec.squash ? range * sigmoid(head(j)) * (1.0 - sigmoid(head(j))) : 0.5 * range;
      d_out(j) = lambda(t, j) * slope;
    }
    d_out.tail(latent) = carry.cwiseProduct((1.0 - ell.array().square()).matrix());
    VectorXd delta = d_out;
    for (std::size_t i = n_layers; i-- > 0;) {
      const Index rows = sizes[i + 1], cols = sizes[i];
      Eigen::Map<const MatrixXd> w(params.theta.data() + offsets[i], rows, cols);
      Eigen::Map<MatrixXd> gw(grad.data() + offsets[i], rows, cols);
      Eigen::Map<VectorXd> gb(grad.data() + offsets[i] + rows * cols, rows);
      gw.noalias() += delta * acts[i].transpose();
      gb += delta;
      VectorXd d_input = w.transpose() * delta;
      if (i > 0)
        delta = d_input.cwiseProduct((1.0 - acts[i].array().square()).matrix());
      else
        carry = d_input.tail(latent);
    }
  }
  return grad;
}

MatrixXd ddr_targets(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  check_inputs(params, path, x0);
  const auto& spec = params.spec;
  const auto n = static_cast<Index>(spec.n_hydros);
  const Index latent = spec.latent_dim;
  const auto sizes = spec.layer_sizes();
  const std::size_t n_layers = sizes.size() - 1;
  const int T = path.horizon();
  const Index widest = *std::max_element(sizes.begin(), sizes.end());
  VectorXd a = VectorXd::Zero(widest), z = VectorXd::Zero(widest);
  VectorXd ell = VectorXd::Zero(latent);
  const VectorXd x0n = normalized_x0(spec, x0);
  MatrixXd targets(T, n);
  for (int t = 0; t < T; ++t) {
    a.head(sizes.front()).setZero();
    if (t == 0) {
      a.segment(n, n) = x0n;
      a(2 * n) = 1.0;
    } else {
      a.head(n) = path.inflows.row(t).transpose().cwiseQuotient(spec.inflow_scale);
    }
    a.segment(sizes.front() - latent, latent) = ell;
    Index offset = 0;
    for (std::size_t i = 0; i < n_layers; ++i) {
      const Index rows = sizes[i + 1], cols = sizes[i];
      Eigen::Map<const MatrixXd> w(params.theta.data() + offset, rows, cols);
      Eigen::Map<const VectorXd> b(params.theta.data() + offset + rows * cols, rows);
      offset += rows * cols + rows;
      z.head(rows).noalias() = w * a.head(cols);
      z.head(rows) += b;
      if (i + 1 < n_layers) {
        tanh_into(z.head(rows), a.head(rows).array());
      }
    }
    tanh_into(z.segment(n, latent), ell.array());
    for (Index j = 0; j < n; ++j) {
      const double range = spec.v_max(j) - spec.v_min(j);
      targets(t, j) = spec.squash ? spec.v_min(j) + range * sigmoid(z(j))
                                  : spec.v_min(j) + 0.5 * range * (1.0 + z(j));
    }
  }
  return targets;
}

MatrixXd targets(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  return params.spec.kind == PolicyKind::ddr ? ddr_targets(params, path, x0) : ldr_forward(params, path, x0);
}

Rollout rollout(const PolicyParams& params, const scenario::ScenarioPath& path, const VectorXd& x0) {
  Rollout out;
  if (params.spec.kind == PolicyKind::ddr) {
    out.tape = ddr_forward(params, path, x0);
    out.targets = out.tape.targets;
  } else {
    out.targets = ldr_forward(params, path, x0);
  }
  return out;
}

VectorXd vjp(const PolicyParams& params, const Rollout& forward, const scenario::ScenarioPath& path,
             const VectorXd& x0, const MatrixXd& lambda) {
  if (params.spec.kind == PolicyKind::ddr) return ddr_backward(params, forward.tape, lambda);
  return ldr_backward(params, path, x0, lambda);
}

}  // namespace tsgdr::policy
