#include "tsgdr/lp/linear_program.hpp"

#include <cctype>
#include <cmath>
#include <ostream>

#include "tsgdr/error.hpp"

namespace tsgdr::lp {

namespace {

bool all_finite(const SparseMatrix& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (!std::isfinite(it.value())) return false;
  return true;
}

}  // namespace

void LinearProgram::check() const {
  const auto n = n_vars();
  if (eq_matrix.rows() != eq_rhs.size() || eq_matrix.cols() != n)
    throw DimensionError("linear program: equality block shape mismatch");
  if (in_matrix.rows() != in_rhs.size() || in_matrix.cols() != n)
    throw DimensionError("linear program: inequality block shape mismatch");
  if (lower.size() != n || upper.size() != n)
    throw DimensionError("linear program: bound vector length mismatch");
  if (!row_tags.empty() && static_cast<Eigen::Index>(row_tags.size()) != n_eq())
    throw DimensionError("linear program: row_tags length mismatch");
  if (!objective.allFinite() || !eq_rhs.allFinite() || !in_rhs.allFinite() ||
      !std::isfinite(objective_offset))
    throw ValidationError("linear program: non-finite objective or rhs");
  if (!all_finite(eq_matrix) || !all_finite(in_matrix))
    throw ValidationError("linear program: non-finite matrix entry");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isnan(lower(j)) || std::isnan(upper(j)) || lower(j) == kInf ||
        upper(j) == -kInf)
      throw ValidationError("linear program: invalid bound on column " +
                            std::to_string(j));
    if (lower(j) > upper(j))
      throw ValidationError("linear program: lower > upper on column " +
                            std::to_string(j));
  }
}

Eigen::Index LpBuilder::add_variable(double lower, double upper, double cost,
                                     std::string name) {
  lower_.push_back(lower);
  upper_.push_back(upper);
  cost_.push_back(cost);
  names_.push_back(std::move(name));
  return static_cast<Eigen::Index>(cost_.size() - 1);
}

Eigen::Index LpBuilder::add_eq_row(const std::vector<Term>& terms, double rhs,
                                   std::string tag) {
  const auto row = static_cast<Eigen::Index>(eq_rhs_.size());
  for (const auto& [var, coef] : terms)
    if (coef != 0.0) eq_entries_.emplace_back(row, var, coef);
  eq_rhs_.push_back(rhs);
  tags_.push_back(std::move(tag));
  return row;
}

Eigen::Index LpBuilder::add_ge_row(const std::vector<Term>& terms, double rhs) {
  const auto row = static_cast<Eigen::Index>(in_rhs_.size());
  for (const auto& [var, coef] : terms)
    if (coef != 0.0) in_entries_.emplace_back(row, var, coef);
  in_rhs_.push_back(rhs);
  return row;
}

void LpBuilder::set_bounds(Eigen::Index var, double lower, double upper) {
  lower_[static_cast<std::size_t>(var)] = lower;
  upper_[static_cast<std::size_t>(var)] = upper;
}

LinearProgram LpBuilder::build() const {
  LinearProgram lp;
  const auto n = n_vars();
  lp.objective = Eigen::Map<const Eigen::VectorXd>(cost_.data(), n);
  lp.objective_offset = offset_;
  lp.lower = Eigen::Map<const Eigen::VectorXd>(lower_.data(), n);
  lp.upper = Eigen::Map<const Eigen::VectorXd>(upper_.data(), n);
  lp.eq_rhs = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), n_eq());
  lp.in_rhs = Eigen::Map<const Eigen::VectorXd>(in_rhs_.data(), n_in());
  lp.eq_matrix.resize(n_eq(), n);
  lp.eq_matrix.setFromTriplets(eq_entries_.begin(), eq_entries_.end());
  lp.in_matrix.resize(n_in(), n);
  lp.in_matrix.setFromTriplets(in_entries_.begin(), in_entries_.end());
  lp.row_tags = tags_;
  lp.column_names = names_;
  return lp;
}

namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') ? c : '_';
  return out;
}

}  // namespace

void write_lp_format(const LinearProgram& lp, std::ostream& out) {
  const auto n = lp.n_vars();
  std::vector<std::string> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto k = static_cast<std::size_t>(j);
    col[k] = (k < lp.column_names.size() && !lp.column_names[k].empty())
                 ? sanitize(lp.column_names[k]) + "_" + std::to_string(j)
                 : "x" + std::to_string(j);
  }
  out.precision(17);
  auto write_row = [&](const SparseMatrix& m_t, Eigen::Index i) {
    // m_t is the transposed block: column i holds row i
    bool first = true;
    for (SparseMatrix::InnerIterator it(m_t, i); it; ++it) {
      const double v = it.value();
      out << (v < 0 ? " - " : (first ? " " : " + ")) << std::abs(v) << ' '
          << col[static_cast<std::size_t>(it.row())];
      first = false;
    }
    if (first) out << " 0 " << col.front();
  };

  out << "\\ generated by tsgdr\nMinimize\n obj:";
  bool any = false;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double v = lp.objective(j);
    if (v == 0.0) continue;
    out << (v < 0 ? " - " : " + ") << std::abs(v) << ' ' << col[static_cast<std::size_t>(j)];
    any = true;
  }
  if (lp.objective_offset != 0.0)
    out << (lp.objective_offset < 0 ? " - " : " + ") << std::abs(lp.objective_offset);
  if (!any && lp.objective_offset == 0.0) out << " 0 " << (n > 0 ? col.front() : "x0");
  out << "\nSubject To\n";
  const SparseMatrix eq_t = lp.eq_matrix.transpose();
  for (Eigen::Index i = 0; i < lp.n_eq(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const std::string name = (k < lp.row_tags.size() && !lp.row_tags[k].empty())
                                 ? sanitize(lp.row_tags[k])
                                 : "e" + std::to_string(i);
    out << ' ' << name << ':';
    write_row(eq_t, i);
    out << " = " << lp.eq_rhs(i) << '\n';
  }
  const SparseMatrix in_t = lp.in_matrix.transpose();
  for (Eigen::Index i = 0; i < lp.n_in(); ++i) {
    out << " g" << i << ':';
    write_row(in_t, i);
    out << " >= " << lp.in_rhs(i) << '\n';
  }
  out << "Bounds\n";
  for (Eigen::Index j = 0; j < n; ++j) {
    const double l = lp.lower(j), u = lp.upper(j);
    const auto& name = col[static_cast<std::size_t>(j)];
    if (std::isinf(l) && std::isinf(u))
      out << ' ' << name << " free\n";
    else if (std::isinf(l))
      out << " -inf <= " << name << " <= " << u << '\n';
    else if (std::isinf(u))
      out << ' ' << name << " >= " << l << '\n';
    else
      out << ' ' << l << " <= " << name << " <= " << u << '\n';
  }
  out << "End\n";
}

}  // namespace tsgdr::lp
