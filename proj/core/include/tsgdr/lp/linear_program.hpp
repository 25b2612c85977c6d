#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace tsgdr::lp {

using SparseMatrix = Eigen::SparseMatrix<double>;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// min c'x + offset  s.t.  A_eq x = b_eq,  A_in x >= b_in,  l <= x <= u.
struct LinearProgram {
  Eigen::VectorXd objective;
  double objective_offset = 0.0;
  SparseMatrix eq_matrix;
  Eigen::VectorXd eq_rhs;
  SparseMatrix in_matrix;
  Eigen::VectorXd in_rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  /// Opaque labels on equality rows; empty string means untagged.
  std::vector<std::string> row_tags;
  /// Optional, used only when writing the LP to text.
  std::vector<std::string> column_names;

  Eigen::Index n_vars() const { return objective.size(); }
  Eigen::Index n_eq() const { return eq_rhs.size(); }
  Eigen::Index n_in() const { return in_rhs.size(); }

  /// Throws DimensionError on inconsistent shapes and ValidationError on
  /// NaN/inf data or l > u.
  void check() const;
};

using Term = std::pair<Eigen::Index, double>;

/// Incremental construction of a LinearProgram from rows of sparse terms.
class LpBuilder {
 public:
  Eigen::Index add_variable(double lower, double upper, double cost,
                            std::string name = {});
  Eigen::Index add_eq_row(const std::vector<Term>& terms, double rhs,
                          std::string tag = {});
  /// Adds sum(terms) >= rhs.
  Eigen::Index add_ge_row(const std::vector<Term>& terms, double rhs);

  void set_cost(Eigen::Index var, double cost) { cost_[static_cast<std::size_t>(var)] = cost; }
  void set_bounds(Eigen::Index var, double lower, double upper);
  void set_eq_rhs(Eigen::Index row, double rhs) { eq_rhs_[static_cast<std::size_t>(row)] = rhs; }
  void add_objective_offset(double v) { offset_ += v; }

  Eigen::Index n_vars() const { return static_cast<Eigen::Index>(cost_.size()); }
  Eigen::Index n_eq() const { return static_cast<Eigen::Index>(eq_rhs_.size()); }
  Eigen::Index n_in() const { return static_cast<Eigen::Index>(in_rhs_.size()); }

  LinearProgram build() const;

 private:
  std::vector<double> cost_, lower_, upper_, eq_rhs_, in_rhs_;
  std::vector<std::string> names_, tags_;
  std::vector<Eigen::Triplet<double>> eq_entries_, in_entries_;
  double offset_ = 0.0;
};

/// Writes the program in CPLEX LP text format.
void write_lp_format(const LinearProgram& lp, std::ostream& out);

}  // namespace tsgdr::lp
