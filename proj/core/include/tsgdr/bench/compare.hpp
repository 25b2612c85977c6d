#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsgdr/lthd/evaluation.hpp"
#include "tsgdr/policy/policy.hpp"
#include "tsgdr/sddp/sddp.hpp"

namespace tsgdr::bench {

/// Test-set outcome of one model. Timing fields never reach the CSV outputs.
struct ModelResult {
  std::string model;
  std::string plan;  // names the test set: paths, horizon and seed
  double mean_cost = 0.0;
  double std_cost = 0.0;
  double max_deviation = 0.0;
  std::size_t n_failed = 0;
  std::vector<double> costs;
  double train_seconds = 0.0;
  double seconds_per_decision = 0.0;
};

struct CompareRow {
  ModelResult result;
  double gap_pct = 0.0;      // 100 (mean - best) / best
  double gap_std_pct = 0.0;  // 100 std / best
};

/// Rows sorted by mean cost (ties by model name); GAP against the first row.
struct CompareReport {
  std::vector<CompareRow> rows;
};

/// Names a test set by everything that determines it: case, scenario source,
/// path count, horizon and seed.
std::string plan_name(std::uint64_t case_hash, std::uint64_t scenario_hash, std::size_t n_test,
                      int horizon, std::uint64_t seed);

ModelResult evaluate_params(const policy::PolicyParams& params, const model::GridCase& grid,
                            const std::vector<scenario::ScenarioPath>& paths, const std::string& plan,
                            const lthd::EvalOptions& options);

ModelResult sddp_result(const sddp::SddpState& state, const sddp::SimulationSummary& simulation,
                        const std::string& plan);
ModelResult evaluate_sddp(const sddp::SddpState& state, const model::GridCase& grid,
                          const std::vector<scenario::ScenarioPath>& paths, const std::string& plan,
                          const sddp::SddpOptions& options);

/// Throws ValidationError when the results were not produced on one test set
/// (different plans or path counts) or when the list is empty.
CompareReport make_compare(std::vector<ModelResult> results);

/// `model,plan,mean_cost,std_cost,max_dev,n_failed`
std::string eval_csv(const std::vector<ModelResult>& results);
/// `model,plan,mean_cost,std_cost,gap_pct,gap_std_pct`
std::string compare_csv(const CompareReport& report);
/// Aligned text table with timing columns.
std::string compare_table(const CompareReport& report);
/// Timing and other run-dependent fields, kept apart from the CSVs.
std::string compare_metadata(const CompareReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tsgdr::bench
