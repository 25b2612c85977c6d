#include "tsgdr/lp/interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include <Eigen/SparseCholesky>

#include "tsgdr/error.hpp"

namespace tsgdr::lp {

using Eigen::Index;
using Eigen::VectorXd;

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

double KktResiduals::max() const { return std::max({primal, dual, gap}); }

namespace {

constexpr double kRegularization = 1e-9;
constexpr double kDivergence = 1e10;
constexpr int kPolishRetries = 8;

double inf_norm(const VectorXd& v) { return v.size() > 0 ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Factorizes [-(diag(d) + rt I)  M'; M  rb I] with a sparse LDL' and solves
/// the unregularized system [-diag(d) M'; M 0] by iterative refinement.
class QuasiDefinite {
 public:
  explicit QuasiDefinite(const SparseMatrix& m) : m_(m), p_(m.rows()), q_(m.cols()) {
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(m.nonZeros() + p_ + q_));
    for (Index j = 0; j < q_; ++j) {
      entries.emplace_back(j, j, 1.0);
      for (SparseMatrix::InnerIterator it(m, j); it; ++it)
        entries.emplace_back(q_ + it.row(), j, it.value());
    }
    for (Index i = 0; i < p_; ++i) entries.emplace_back(q_ + i, q_ + i, 1.0);
    k_.resize(p_ + q_, p_ + q_);
    k_.setFromTriplets(entries.begin(), entries.end());
    k_.makeCompressed();
    // lower storage with sorted rows: the diagonal leads every column
    diag_.resize(static_cast<std::size_t>(p_ + q_));
    for (Index j = 0; j < p_ + q_; ++j) diag_[static_cast<std::size_t>(j)] = k_.outerIndexPtr()[j];
    if (p_ + q_ > 0) ldlt_.analyzePattern(k_);
  }

  bool factor(const VectorXd& d, double reg_top, double reg_bot) {
    d_ = d;
    double* values = k_.valuePtr();
    for (Index j = 0; j < q_; ++j) values[diag_[static_cast<std::size_t>(j)]] = -(d(j) + reg_top);
    for (Index i = 0; i < p_; ++i) values[diag_[static_cast<std::size_t>(q_ + i)]] = reg_bot;
    if (p_ + q_ == 0) return true;
    ldlt_.factorize(k_);
    return ldlt_.info() == Eigen::Success;
  }

  /// Keep refining after slow steps while the residual still drops.
  void refine_fully() { refine_fully_ = true; }

  /// Returns false when the solution is not finite.
  bool solve(const VectorXd& rt, const VectorXd& rb, VectorXd& a, VectorXd& b) const {
    a.resize(q_);
    b.resize(p_);
    if (p_ + q_ == 0) return true;
    VectorXd rhs(p_ + q_);
    rhs << rt, rb;
    VectorXd sol = ldlt_.solve(rhs);
    VectorXd res = residual(rhs, sol);
    double res_norm = inf_norm(res);
    const double floor = 1e-15 * (1.0 + inf_norm(rhs));
    for (int k = 0; k < 8 && res_norm > floor; ++k) {
      VectorXd candidate = sol + ldlt_.solve(res);
      VectorXd cand_res = residual(rhs, candidate);
      const double cand_norm = inf_norm(cand_res);
      if (!(cand_norm < res_norm)) break;
      const bool slow = cand_norm > 0.5 * res_norm;
      sol = std::move(candidate);
      res = std::move(cand_res);
      res_norm = cand_norm;
      if (slow && !refine_fully_) break;
    }
    if (!sol.allFinite()) return false;
    a = sol.head(q_);
    b = sol.tail(p_);
    return true;
  }

 private:
  VectorXd residual(const VectorXd& rhs, const VectorXd& sol) const {
    VectorXd out(p_ + q_);
    const auto a = sol.head(q_);
    const auto b = sol.tail(p_);
    out.head(q_) = rhs.head(q_) + d_.cwiseProduct(a) - m_.transpose() * b;
    out.tail(p_) = rhs.tail(p_) - m_ * a;
    return out;
  }

  const SparseMatrix& m_;
  bool refine_fully_ = false;
  Index p_, q_;
  SparseMatrix k_;
  std::vector<Index> diag_;
  VectorXd d_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt_;
};

/// Presolved and scaled form: min c'x  s.t.  A x = b,  l <= x <= u, where the
/// >= rows carry a surplus column with coefficient -1. Original quantities
/// are x = beta * D_c x~, duals = sigma * D_r y~, bound duals = sigma z~ / D_c.
struct Reduced {
  SparseMatrix a;
  VectorXd b, c, l, u;
  VectorXd col_scale, row_scale;
  double obj_scale = 1.0;
  double primal_scale = 1.0;
  std::vector<Index> cols;
  std::vector<Index> eq_rows, in_rows;
  VectorXd fixed_x;
  std::vector<bool> fixed;
  bool infeasible = false;

  Index n_struct() const { return static_cast<Index>(cols.size()); }
};

Reduced reduce(const LinearProgram& lp) {
  Reduced r;
  const Index n = lp.n_vars();
  r.fixed.assign(static_cast<std::size_t>(n), false);
  r.fixed_x = VectorXd::Zero(n);
  std::vector<Index> col_pos(static_cast<std::size_t>(n), -1);
  for (Index j = 0; j < n; ++j) {
    if (lp.lower(j) == lp.upper(j)) {
      r.fixed[static_cast<std::size_t>(j)] = true;
      r.fixed_x(j) = lp.lower(j);
    } else {
      col_pos[static_cast<std::size_t>(j)] = r.n_struct();
      r.cols.push_back(j);
    }
  }
  const VectorXd b_eq = lp.eq_rhs - lp.eq_matrix * r.fixed_x;
  const VectorXd b_in = lp.in_rhs - lp.in_matrix * r.fixed_x;

  auto live_rows = [&](const SparseMatrix& m) {
    std::vector<int> count(static_cast<std::size_t>(m.rows()), 0);
    for (Index j = 0; j < m.outerSize(); ++j) {
      if (r.fixed[static_cast<std::size_t>(j)]) continue;
      for (SparseMatrix::InnerIterator it(m, j); it; ++it) ++count[static_cast<std::size_t>(it.row())];
    }
    return count;
  };
  const auto eq_count = live_rows(lp.eq_matrix);
  const auto in_count = live_rows(lp.in_matrix);
  std::vector<Index> eq_pos(eq_count.size(), -1), in_pos(in_count.size(), -1);
  for (Index i = 0; i < lp.n_eq(); ++i) {
    if (eq_count[static_cast<std::size_t>(i)] > 0) {
      eq_pos[static_cast<std::size_t>(i)] = static_cast<Index>(r.eq_rows.size());
      r.eq_rows.push_back(i);
    } else if (std::abs(b_eq(i)) > 1e-9 * (1.0 + std::abs(lp.eq_rhs(i)))) {
      r.infeasible = true;
    }
  }
  for (Index i = 0; i < lp.n_in(); ++i) {
    if (in_count[static_cast<std::size_t>(i)] > 0) {
      in_pos[static_cast<std::size_t>(i)] = static_cast<Index>(r.in_rows.size());
      r.in_rows.push_back(i);
    } else if (b_in(i) > 1e-9 * (1.0 + std::abs(lp.in_rhs(i)))) {
      r.infeasible = true;
    }
  }

  const Index n_eq = static_cast<Index>(r.eq_rows.size());
  const Index n_in = static_cast<Index>(r.in_rows.size());
  const Index ns = r.n_struct();
  const Index cols = ns + n_in;
  const Index rows = n_eq + n_in;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(lp.eq_matrix.nonZeros() + lp.in_matrix.nonZeros() + n_in));
  for (Index j = 0; j < n; ++j) {
    const Index c = col_pos[static_cast<std::size_t>(j)];
    if (c < 0) continue;
    for (SparseMatrix::InnerIterator it(lp.eq_matrix, j); it; ++it)
      entries.emplace_back(eq_pos[static_cast<std::size_t>(it.row())], c, it.value());
    for (SparseMatrix::InnerIterator it(lp.in_matrix, j); it; ++it)
      entries.emplace_back(n_eq + in_pos[static_cast<std::size_t>(it.row())], c, it.value());
  }
  for (Index k = 0; k < n_in; ++k) entries.emplace_back(n_eq + k, ns + k, -1.0);
  r.a.resize(rows, cols);
  r.a.setFromTriplets(entries.begin(), entries.end());
  r.a.makeCompressed();

  r.b.resize(rows);
  for (Index i = 0; i < n_eq; ++i) r.b(i) = b_eq(r.eq_rows[static_cast<std::size_t>(i)]);
  for (Index i = 0; i < n_in; ++i) r.b(n_eq + i) = b_in(r.in_rows[static_cast<std::size_t>(i)]);
  r.c = VectorXd::Zero(cols);
  r.l = VectorXd::Zero(cols);
  r.u = VectorXd::Constant(cols, kInf);
  for (Index k = 0; k < ns; ++k) {
    const Index j = r.cols[static_cast<std::size_t>(k)];
    r.c(k) = lp.objective(j);
    r.l(k) = lp.lower(j);
    r.u(k) = lp.upper(j);
  }

  // Ruiz equilibration of the constraint matrix
  r.row_scale = VectorXd::Ones(rows);
  r.col_scale = VectorXd::Ones(cols);
  for (int pass = 0; pass < 10; ++pass) {
    VectorXd row_max = VectorXd::Zero(rows), col_max = VectorXd::Zero(cols);
    for (Index j = 0; j < cols; ++j)
      for (SparseMatrix::InnerIterator it(r.a, j); it; ++it) {
        const double v = std::abs(it.value());
        row_max(it.row()) = std::max(row_max(it.row()), v);
        col_max(j) = std::max(col_max(j), v);
      }
    const auto factor = [](double m) { return m > 0.0 ? 1.0 / std::sqrt(m) : 1.0; };
    const VectorXd rs = row_max.unaryExpr(factor);
    const VectorXd cs = col_max.unaryExpr(factor);
    for (Index j = 0; j < cols; ++j)
      for (SparseMatrix::InnerIterator it(r.a, j); it; ++it) it.valueRef() *= rs(it.row()) * cs(j);
    r.row_scale.array() *= rs.array();
    r.col_scale.array() *= cs.array();
    const double worst = std::max(row_max.size() ? (row_max.array() - 1.0).abs().maxCoeff() : 0.0,
                                  col_max.size() ? (col_max.array() - 1.0).abs().maxCoeff() : 0.0);
    if (worst < 1e-3) break;
  }

  r.c.array() *= r.col_scale.array();
  const double c_norm = inf_norm(r.c);
  r.obj_scale = c_norm > 0.0 ? c_norm : 1.0;
  r.c /= r.obj_scale;
  r.b.array() *= r.row_scale.array();
  r.primal_scale = std::max(1.0, inf_norm(r.b));
  r.b /= r.primal_scale;
  for (Index j = 0; j < cols; ++j) {
    const double s = r.primal_scale * r.col_scale(j);
    if (std::isfinite(r.l(j))) r.l(j) /= s;
    if (std::isfinite(r.u(j))) r.u(j) /= s;
  }
  return r;
}

/// Iterate in the reduced space.
struct Iterate {
  VectorXd x, y, zl, zu;
};

double dual_value(const LinearProgram& lp, const SolveResult& res) {
  double v = lp.eq_rhs.dot(res.y_eq) + lp.in_rhs.dot(res.y_in) + lp.objective_offset;
  for (Index j = 0; j < lp.n_vars(); ++j) {
    if (std::isfinite(lp.lower(j))) v += lp.lower(j) * res.z_lower(j);
    if (std::isfinite(lp.upper(j))) v -= lp.upper(j) * res.z_upper(j);
  }
  return v;
}

void unscale(const LinearProgram& lp, const Reduced& r, const Iterate& it, SolveResult& out) {
  const Index ns = r.n_struct();
  const Index n_eq = static_cast<Index>(r.eq_rows.size());
  out.x = r.fixed_x;
  out.z_lower = VectorXd::Zero(lp.n_vars());
  out.z_upper = VectorXd::Zero(lp.n_vars());
  for (Index k = 0; k < ns; ++k) {
    const Index j = r.cols[static_cast<std::size_t>(k)];
    out.x(j) = r.primal_scale * r.col_scale(k) * it.x(k);
    // a negative value can only come from the polish; the residual check
    // rejects the point if the clamp matters
    out.z_lower(j) = std::max(r.obj_scale * it.zl(k) / r.col_scale(k), 0.0);
    out.z_upper(j) = std::max(r.obj_scale * it.zu(k) / r.col_scale(k), 0.0);
  }
  out.y_eq = VectorXd::Zero(lp.n_eq());
  out.y_in = VectorXd::Zero(lp.n_in());
  for (Index i = 0; i < n_eq; ++i)
    out.y_eq(r.eq_rows[static_cast<std::size_t>(i)]) = r.obj_scale * r.row_scale(i) * it.y(i);
  for (std::size_t i = 0; i < r.in_rows.size(); ++i) {
    const Index k = n_eq + static_cast<Index>(i);
    out.y_in(r.in_rows[i]) = std::max(r.obj_scale * r.row_scale(k) * it.y(k), 0.0);
  }
  if (static_cast<Index>(r.cols.size()) < lp.n_vars()) {
    const VectorXd reduced_cost = lp.objective - lp.eq_matrix.transpose() * out.y_eq -
                                  lp.in_matrix.transpose() * out.y_in;
    for (Index j = 0; j < lp.n_vars(); ++j) {
      if (!r.fixed[static_cast<std::size_t>(j)]) continue;
      out.z_lower(j) = std::max(reduced_cost(j), 0.0);
      out.z_upper(j) = std::max(-reduced_cost(j), 0.0);
    }
  }
  out.kkt = check_kkt(lp, out);
  out.objective = lp.objective.dot(out.x) + lp.objective_offset;
  out.dual_objective = dual_value(lp, out);
}

double max_step(const VectorXd& v, const VectorXd& dv, const std::vector<bool>& mask) {
  double alpha = 1.0;
  for (Index j = 0; j < v.size(); ++j)
    if (mask[static_cast<std::size_t>(j)] && dv(j) < 0.0) alpha = std::min(alpha, -v(j) / dv(j));
  return alpha;
}

/// Solves for the primal and dual points closest to `it` that are exact on
/// the face given by `state` (0 free, 1 at lower, 2 at upper). Returns the
/// largest row residual or bound violation, or infinity when a solve fails.
double face_solve(const Reduced& r, const Iterate& it, const std::vector<int>& state, Iterate& out) {
  const SparseMatrix& a = r.a;
  const Index n = a.cols(), m = a.rows();
  std::vector<Index> free_cols;
  VectorXd x = it.x;
  for (Index j = 0; j < n; ++j) {
    const int s = state[static_cast<std::size_t>(j)];
    if (s == 1) x(j) = r.l(j);
    else if (s == 2) x(j) = r.u(j);
    else free_cols.push_back(j);
  }
  const Index nf = static_cast<Index>(free_cols.size());
  VectorXd x_fixed_part = x;
  std::vector<Eigen::Triplet<double>> entries;
  VectorXd x_f(nf), c_f(nf);
  for (Index k = 0; k < nf; ++k) {
    const Index j = free_cols[static_cast<std::size_t>(k)];
    x_fixed_part(j) = 0.0;
    x_f(k) = it.x(j);
    c_f(k) = r.c(j);
    for (SparseMatrix::InnerIterator e(a, j); e; ++e) entries.emplace_back(e.row(), k, e.value());
  }
  SparseMatrix a_f(m, nf);
  a_f.setFromTriplets(entries.begin(), entries.end());
  a_f.makeCompressed();

  const VectorXd rhs = r.b - a * x_fixed_part;
  VectorXd x_new, nu;
  QuasiDefinite primal(a_f);
  primal.refine_fully();
  if (!primal.factor(VectorXd::Ones(nf), 0.0, kRegularization)) return kInf;
  if (!primal.solve(-x_f, rhs, x_new, nu)) return kInf;

  const SparseMatrix a_ft = a_f.transpose();
  VectorXd y_new, mu;
  QuasiDefinite dual(a_ft);
  dual.refine_fully();
  if (!dual.factor(VectorXd::Ones(m), 0.0, kRegularization)) return kInf;
  if (!dual.solve(-it.y, c_f, y_new, mu)) return kInf;

  out.x = x;
  for (Index k = 0; k < nf; ++k) out.x(free_cols[static_cast<std::size_t>(k)]) = x_new(k);
  out.y = y_new;
  out.zl = VectorXd::Zero(n);
  out.zu = VectorXd::Zero(n);
  const VectorXd reduced_cost = r.c - a.transpose() * y_new;
  for (Index j = 0; j < n; ++j) {
    const int s = state[static_cast<std::size_t>(j)];
    if (s == 1) out.zl(j) = reduced_cost(j);
    if (s == 2) out.zu(j) = -reduced_cost(j);
  }
  double violation = m > 0 ? inf_norm(a * out.x - r.b) : 0.0;
  for (Index j : free_cols) violation = std::max({violation, r.l(j) - out.x(j), out.x(j) - r.u(j)});
  return violation;
}

/// Largest reduced cost on the free columns of a face solution.
double free_reduced_cost(const Reduced& r, const std::vector<int>& state, const Iterate& f, VectorXd& d) {
  d = r.c - r.a.transpose() * f.y;
  double worst = 0.0;
  for (Index j = 0; j < d.size(); ++j) {
    if (state[static_cast<std::size_t>(j)] != 0) d(j) = 0.0;
    worst = std::max(worst, std::abs(d(j)));
  }
  return worst;
}

/// A face whose free columns are linearly dependent leaves the dual system
/// inconsistent. Its least-squares residual d lies in the null space of the
/// free columns, so x - t d keeps the rows and lowers the cost. Each pass
/// takes that ray to the first bound and fixes the blocking column there.
void bound_out_dependent(const Reduced& r, const Iterate& it, std::vector<int>& state, Iterate& out,
                         double residual) {
  const double dual_floor = 1e-14 * (1.0 + inf_norm(r.c));
  const double primal_floor = std::max(residual, 1e-14 * (1.0 + inf_norm(r.b)));
  VectorXd d;
  double dres = free_reduced_cost(r, state, out, d);
  for (int pass = 0; pass < 8 && dres > dual_floor; ++pass) {
    Index block = -1;
    int side = 0;
    double t_min = kInf;
    for (Index j = 0; j < d.size(); ++j) {
      if (d(j) == 0.0) continue;
      const double t = d(j) > 0.0 ? (out.x(j) - r.l(j)) / d(j) : (out.x(j) - r.u(j)) / d(j);
      if (std::isfinite(t) && t < t_min) {
        t_min = t;
        block = j;
        side = d(j) > 0.0 ? 1 : 2;
      }
    }
    if (block < 0) return;
    std::vector<int> trial_state = state;
    trial_state[static_cast<std::size_t>(block)] = side;
    Iterate trial;
    const double trial_residual = face_solve(r, it, trial_state, trial);
    if (!(trial_residual <= primal_floor)) return;
    VectorXd trial_d;
    const double trial_dres = free_reduced_cost(r, trial_state, trial, trial_d);
    if (!(trial_dres < dres)) return;
    out = std::move(trial);
    state = std::move(trial_state);
    d = std::move(trial_d);
    dres = trial_dres;
  }
}

/// Fixes the variables the interior point puts on a bound and recomputes the
/// closest primal and dual points that are exact on that face. When the face
/// leaves the rows inconsistent (a nearly degenerate vertex), the fixed
/// columns least clearly at their bound are freed until the free columns can
/// span the rows, and the better of the two faces is kept. Dependent free
/// columns are then bounded out one at a time.
bool polish(const Reduced& r, const Iterate& it, Iterate& out) {
  const Index n = r.a.cols(), m = r.a.rows();
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<double, Index>> doubt;  // distance / bound dual of fixed columns
  Index nf = 0;
  for (Index j = 0; j < n; ++j) {
    const bool has_l = std::isfinite(r.l(j)), has_u = std::isfinite(r.u(j));
    const double dl = has_l ? it.x(j) - r.l(j) : kInf;
    const double du = has_u ? r.u(j) - it.x(j) : kInf;
    const bool at_l = has_l && dl < it.zl(j);
    const bool at_u = has_u && du < it.zu(j);
    auto& s = state[static_cast<std::size_t>(j)];
    if (at_l && (!at_u || dl <= du)) {
      s = 1;
      doubt.emplace_back(dl / it.zl(j), j);
    } else if (at_u) {
      s = 2;
      doubt.emplace_back(du / it.zu(j), j);
    } else {
      ++nf;
    }
  }
  double residual = face_solve(r, it, state, out);
  if (!std::isfinite(residual)) return false;
  const double floor = 1e-14 * (1.0 + inf_norm(r.b));
  if (residual > floor && nf < m) {
    const auto extra = static_cast<std::size_t>(std::min<Index>(m - nf, static_cast<Index>(doubt.size())));
    std::partial_sort(doubt.begin(), doubt.begin() + static_cast<std::ptrdiff_t>(extra), doubt.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<int> wide_state = state;
    for (std::size_t k = 0; k < extra; ++k) wide_state[static_cast<std::size_t>(doubt[k].second)] = 0;
    Iterate wider;
    const double wide_residual = face_solve(r, it, wide_state, wider);
    if (wide_residual < residual) {
      out = std::move(wider);
      state = std::move(wide_state);
      residual = wide_residual;
    }
  }
  bound_out_dependent(r, it, state, out, residual);
  return true;
}

LinearProgram phase_one(const LinearProgram& lp) {
  const Index n = lp.n_vars(), me = lp.n_eq(), mi = lp.n_in();
  LinearProgram p;
  p.objective = VectorXd::Zero(n + 2 * me + mi);
  p.objective.tail(2 * me + mi).setOnes();
  p.lower = VectorXd::Zero(p.objective.size());
  p.upper = VectorXd::Constant(p.objective.size(), kInf);
  p.lower.head(n) = lp.lower;
  p.upper.head(n) = lp.upper;
  p.eq_rhs = lp.eq_rhs;
  p.in_rhs = lp.in_rhs;
  std::vector<Eigen::Triplet<double>> eq, in;
  for (Index j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(lp.eq_matrix, j); it; ++it) eq.emplace_back(it.row(), j, it.value());
    for (SparseMatrix::InnerIterator it(lp.in_matrix, j); it; ++it) in.emplace_back(it.row(), j, it.value());
  }
  for (Index i = 0; i < me; ++i) {
    eq.emplace_back(i, n + 2 * i, 1.0);
    eq.emplace_back(i, n + 2 * i + 1, -1.0);
  }
  for (Index i = 0; i < mi; ++i) in.emplace_back(i, n + 2 * me + i, 1.0);
  p.eq_matrix.resize(me, p.objective.size());
  p.eq_matrix.setFromTriplets(eq.begin(), eq.end());
  p.in_matrix.resize(mi, p.objective.size());
  p.in_matrix.setFromTriplets(in.begin(), in.end());
  return p;
}

SolveResult solve_impl(const LinearProgram& lp, const SolverOptions& options, bool is_phase_one) {
  lp.check();
  SolveResult result;
  const Reduced r = reduce(lp);
  auto data_norm = [&] { return 1.0 + std::max(inf_norm(lp.eq_rhs), inf_norm(lp.in_rhs)); };
  if (r.infeasible) {
    result.status = SolveStatus::infeasible;
    return result;
  }

  const SparseMatrix& a = r.a;
  const Index n = a.cols(), m = a.rows();
  std::vector<bool> has_l(static_cast<std::size_t>(n)), has_u(static_cast<std::size_t>(n));
  Index n_bounds = 0;
  for (Index j = 0; j < n; ++j) {
    has_l[static_cast<std::size_t>(j)] = std::isfinite(r.l(j));
    has_u[static_cast<std::size_t>(j)] = std::isfinite(r.u(j));
    n_bounds += has_l[static_cast<std::size_t>(j)] + has_u[static_cast<std::size_t>(j)];
  }

  QuasiDefinite system(a);
  Iterate it;
  {
    // least-norm start projected onto A x = b, then pushed inside the bounds
    VectorXd x_ref(n);
    for (Index j = 0; j < n; ++j) {
      const bool hl = has_l[static_cast<std::size_t>(j)], hu = has_u[static_cast<std::size_t>(j)];
      x_ref(j) = hl && hu ? 0.5 * (r.l(j) + r.u(j)) : hl ? r.l(j) + 1.0 : hu ? r.u(j) - 1.0 : 0.0;
    }
    VectorXd nu, v;
    system.factor(VectorXd::Ones(n), 0.0, kRegularization);
    if (!system.solve(-x_ref, r.b, it.x, nu)) it.x = x_ref;
    for (Index j = 0; j < n; ++j) {
      const bool hl = has_l[static_cast<std::size_t>(j)], hu = has_u[static_cast<std::size_t>(j)];
      if (hl && hu) {
        const double w = r.u(j) - r.l(j);
        it.x(j) = std::clamp(it.x(j), r.l(j) + 0.1 * w, r.u(j) - 0.1 * w);
      } else if (hl) {
        it.x(j) = std::max(it.x(j), r.l(j) + 1.0);
      } else if (hu) {
        it.x(j) = std::min(it.x(j), r.u(j) - 1.0);
      }
    }
    if (!system.solve(r.c, VectorXd::Zero(m), v, it.y)) it.y = VectorXd::Zero(m);
    const VectorXd rc = r.c - a.transpose() * it.y;
    it.zl = VectorXd::Zero(n);
    it.zu = VectorXd::Zero(n);
    for (Index j = 0; j < n; ++j) {
      if (has_l[static_cast<std::size_t>(j)]) it.zl(j) = std::max(rc(j), 0.0) + 1.0;
      if (has_u[static_cast<std::size_t>(j)]) it.zu(j) = std::max(-rc(j), 0.0) + 1.0;
    }
  }

  bool diverged_primal = false;
  SolveResult current;
  std::optional<SolveResult> best;
  int extra = 0;
  // Replaces `cur` by the polished point of the current iterate when that
  // point is within tolerance and no worse than cur or working precision.
  auto try_polish = [&](SolveResult& cur) {
    if (!it.x.allFinite()) return false;
    Iterate polished;
    if (!polish(r, it, polished)) return false;
    SolveResult candidate;
    unscale(lp, r, polished, candidate);
    // residuals below 1e-2 tol count as converged to working precision
    const double bar = std::max(cur.kkt.max(), 1e-2 * options.tol);
    if (!(candidate.kkt.max() <= options.tol && candidate.kkt.max() <= bar)) return false;
    candidate.status = SolveStatus::optimal;
    candidate.iterations = cur.iterations;
    candidate.polished = true;
    cur = std::move(candidate);
    return true;
  };
  VectorXd xl(n), xu(n), d(n), dx, dy, dzl(n), dzu(n);
  for (int iter = 0;; ++iter) {
    double comp = 0.0;
    for (Index j = 0; j < n; ++j) {
      xl(j) = has_l[static_cast<std::size_t>(j)] ? it.x(j) - r.l(j) : 0.0;
      xu(j) = has_u[static_cast<std::size_t>(j)] ? r.u(j) - it.x(j) : 0.0;
      comp += xl(j) * it.zl(j) + xu(j) * it.zu(j);
    }
    const double mu = n_bounds > 0 ? comp / static_cast<double>(n_bounds) : 0.0;
    unscale(lp, r, it, current);
    current.iterations = iter;
    result.mu_trace.push_back(mu);
    if (current.kkt.max() <= options.tol) {
      current.status = SolveStatus::optimal;
      if (!options.polish || try_polish(current)) break;
      // the face was misidentified: keep the converged point and let a few
      // more iterations sharpen the complementarity split
      if (!best || current.kkt.max() < best->kkt.max()) best = current;
      if (++extra > kPolishRetries) break;
    }
    if (iter >= options.max_iter) break;
    if (inf_norm(it.x) > kDivergence) {
      diverged_primal = true;
      break;
    }
    if (std::max({inf_norm(it.y), inf_norm(it.zl), inf_norm(it.zu)}) > kDivergence) break;

    const VectorXd rp = r.b - a * it.x;
    const VectorXd rd = r.c - a.transpose() * it.y - it.zl + it.zu;
    for (Index j = 0; j < n; ++j) {
      d(j) = 0.0;
      if (has_l[static_cast<std::size_t>(j)]) d(j) += it.zl(j) / xl(j);
      if (has_u[static_cast<std::size_t>(j)]) d(j) += it.zu(j) / xu(j);
    }
    bool factored = false;
    for (double reg = kRegularization; reg <= 1e-5 && !factored; reg *= 100.0)
      factored = system.factor(d, reg, reg);
    if (!factored) break;

    // Newton direction for complementarity targets rl (lower) and ru (upper)
    auto direction = [&](const VectorXd& rl, const VectorXd& ru) {
      VectorXd top = rd;
      for (Index j = 0; j < n; ++j) {
        if (has_l[static_cast<std::size_t>(j)]) top(j) -= rl(j) / xl(j);
        if (has_u[static_cast<std::size_t>(j)]) top(j) += ru(j) / xu(j);
      }
      if (!system.solve(top, rp, dx, dy)) return false;
      for (Index j = 0; j < n; ++j) {
        dzl(j) = has_l[static_cast<std::size_t>(j)] ? (rl(j) - it.zl(j) * dx(j)) / xl(j) : 0.0;
        dzu(j) = has_u[static_cast<std::size_t>(j)] ? (ru(j) + it.zu(j) * dx(j)) / xu(j) : 0.0;
      }
      return true;
    };
    auto step_lengths = [&] {
      const double ap = std::min(max_step(xl, dx, has_l), max_step(xu, -dx, has_u));
      const double ad = std::min(max_step(it.zl, dzl, has_l), max_step(it.zu, dzu, has_u));
      return std::pair{ap, ad};
    };

    VectorXd rl = -xl.cwiseProduct(it.zl);
    VectorXd ru = -xu.cwiseProduct(it.zu);
    if (!direction(rl, ru)) break;
    const auto [ap_aff, ad_aff] = step_lengths();
    double comp_aff = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (has_l[static_cast<std::size_t>(j)])
        comp_aff += (xl(j) + ap_aff * dx(j)) * (it.zl(j) + ad_aff * dzl(j));
      if (has_u[static_cast<std::size_t>(j)])
        comp_aff += (xu(j) - ap_aff * dx(j)) * (it.zu(j) + ad_aff * dzu(j));
    }
    const double mu_aff = n_bounds > 0 ? comp_aff / static_cast<double>(n_bounds) : 0.0;
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;
    for (Index j = 0; j < n; ++j) {
      if (has_l[static_cast<std::size_t>(j)]) rl(j) += sigma * mu - dx(j) * dzl(j);
      if (has_u[static_cast<std::size_t>(j)]) ru(j) += sigma * mu + dx(j) * dzu(j);
    }
    if (!direction(rl, ru)) break;
    const auto [ap, ad] = step_lengths();
    const double eta = std::max(0.9, 1.0 - 10.0 * mu);
    const double alpha_p = std::min(1.0, std::min(0.995, eta) * ap);
    const double alpha_d = std::min(1.0, std::min(0.995, eta) * ad);
    it.x += alpha_p * dx;
    it.y += alpha_d * dy;
    it.zl += alpha_d * dzl;
    it.zu += alpha_d * dzu;
    if (!it.x.allFinite() || !it.y.allFinite()) break;
  }

  if (best && !current.polished && (current.status != SolveStatus::optimal || best->kkt.max() < current.kkt.max()))
    current = std::move(*best);
  const bool near = current.kkt.max() <= std::max(1e-4, options.tol);
  if (options.polish && !current.polished && current.status != SolveStatus::optimal && near) try_polish(current);

  current.mu_trace = std::move(result.mu_trace);
  if (current.status != SolveStatus::optimal) {
    if (diverged_primal && current.kkt.primal <= 1e-6) {
      current.status = SolveStatus::unbounded;
    } else if (!is_phase_one) {
      const SolveResult feas = solve_impl(phase_one(lp), options, true);
      if (feas.optimal() && feas.objective > std::max(1e-6, options.tol) * data_norm())
        current.status = SolveStatus::infeasible;
      else if (diverged_primal)
        current.status = SolveStatus::unbounded;
      else
        current.status = SolveStatus::iteration_limit;
    }
  }
  return current;
}

}  // namespace

SolveResult solve(const LinearProgram& lp, const SolverOptions& options) {
  return solve_impl(lp, options, false);
}

KktResiduals check_kkt(const LinearProgram& lp, const SolveResult& result) {
  const Index n = lp.n_vars();
  if (result.x.size() != n || result.z_lower.size() != n || result.z_upper.size() != n ||
      result.y_eq.size() != lp.n_eq() || result.y_in.size() != lp.n_in())
    throw DimensionError("check_kkt: result does not match the program");
  KktResiduals k;

  double primal = inf_norm(lp.eq_matrix * result.x - lp.eq_rhs);
  if (lp.n_in() > 0)
    primal = std::max(primal, (lp.in_rhs - lp.in_matrix * result.x).cwiseMax(0.0).maxCoeff());
  double data = std::max(inf_norm(lp.eq_rhs), inf_norm(lp.in_rhs));
  double dobj = lp.eq_rhs.dot(result.y_eq) + lp.in_rhs.dot(result.y_in) + lp.objective_offset;
  double sign = lp.n_in() > 0 ? (-result.y_in).cwiseMax(0.0).maxCoeff() : 0.0;
  for (Index j = 0; j < n; ++j) {
    const double l = lp.lower(j), u = lp.upper(j), x = result.x(j);
    const double zl = result.z_lower(j), zu = result.z_upper(j);
    if (std::isfinite(l)) {
      primal = std::max(primal, l - x);
      data = std::max(data, std::abs(l));
      dobj += l * zl;
      sign = std::max(sign, -zl);
    } else {
      sign = std::max(sign, std::abs(zl));
    }
    if (std::isfinite(u)) {
      primal = std::max(primal, x - u);
      data = std::max(data, std::abs(u));
      dobj -= u * zu;
      sign = std::max(sign, -zu);
    } else {
      sign = std::max(sign, std::abs(zu));
    }
  }
  k.primal = primal / (1.0 + data);

  const VectorXd residual = lp.objective - lp.eq_matrix.transpose() * result.y_eq -
                            lp.in_matrix.transpose() * result.y_in - result.z_lower +
                            result.z_upper;
  k.dual = (inf_norm(residual) + sign) / (1.0 + inf_norm(lp.objective));

  const double pobj = lp.objective.dot(result.x) + lp.objective_offset;
  k.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
  return k;
}

std::vector<double> rhs_sensitivity(const LinearProgram& lp, const SolveResult& result,
                                    const std::vector<std::string>& tags) {
  if (!result.optimal())
    throw ValidationError("rhs_sensitivity: solve status is " + to_string(result.status));
  std::unordered_map<std::string, Index> rows;
  for (std::size_t i = 0; i < lp.row_tags.size(); ++i)
    if (!lp.row_tags[i].empty()) rows.emplace(lp.row_tags[i], static_cast<Index>(i));
  std::vector<double> out;
  out.reserve(tags.size());
  for (const auto& tag : tags) {
    const auto found = rows.find(tag);
    if (found == rows.end()) throw ValidationError("rhs_sensitivity: unknown row tag '" + tag + "'");
    out.push_back(result.y_eq(found->second));
  }
  return out;
}

}  // namespace tsgdr::lp
