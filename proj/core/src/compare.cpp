#include "tsgdr/bench/compare.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/train/trainer.hpp"

namespace tsgdr::bench {

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string plan_name(std::uint64_t case_hash, std::uint64_t scenario_hash, std::size_t n_test,
                      int horizon, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "c%08x-w%08x-n%zu-T%d-s%llu", static_cast<unsigned>(case_hash >> 32),
                static_cast<unsigned>(scenario_hash >> 32), n_test, horizon,
                static_cast<unsigned long long>(seed));
  return buf;
}

ModelResult evaluate_params(const policy::PolicyParams& params, const model::GridCase& grid,
                            const std::vector<scenario::ScenarioPath>& paths, const std::string& plan,
                            const lthd::EvalOptions& options) {
  const auto summary = train::validate(params, grid, paths, options);
  ModelResult r;
  r.model = policy::to_string(params.spec.kind);
  r.plan = plan;
  r.mean_cost = summary.mean_cost;
  r.std_cost = summary.std_cost;
  r.max_deviation = summary.max_deviation;
  r.n_failed = summary.n_failed;
  r.costs = summary.costs;
  r.seconds_per_decision =
      summary.decisions > 0 ? summary.policy_seconds / static_cast<double>(summary.decisions) : 0.0;
  return r;
}

ModelResult sddp_result(const sddp::SddpState& state, const sddp::SimulationSummary& simulation,
                        const std::string& plan) {
  ModelResult r;
  r.model = "sddp";
  r.plan = plan;
  r.mean_cost = simulation.mean_cost;
  r.std_cost = simulation.std_cost;
  r.n_failed = simulation.n_failed;
  r.costs = simulation.costs;
  r.train_seconds = state.seconds;
  r.seconds_per_decision = simulation.seconds_per_decision();
  return r;
}

ModelResult evaluate_sddp(const sddp::SddpState& state, const model::GridCase& grid,
                          const std::vector<scenario::ScenarioPath>& paths, const std::string& plan,
                          const sddp::SddpOptions& options) {
  return sddp_result(state, sddp::simulate(state, grid, paths, options), plan);
}

CompareReport make_compare(std::vector<ModelResult> results) {
  if (results.empty()) throw ValidationError("compare: no model results");
  for (const auto& r : results)
    if (r.plan != results.front().plan || r.costs.size() != results.front().costs.size())
      throw ValidationError("compare: '" + r.model + "' was evaluated on test set '" + r.plan +
                            "', expected '" + results.front().plan + "'");
  std::stable_sort(results.begin(), results.end(), [](const ModelResult& a, const ModelResult& b) {
    return a.mean_cost != b.mean_cost ? a.mean_cost < b.mean_cost : a.model < b.model;
  });
  CompareReport report;
  const double best = results.front().mean_cost;
  for (auto& r : results) {
    CompareRow row;
    row.gap_pct = 100.0 * (r.mean_cost - best) / best;
    row.gap_std_pct = 100.0 * r.std_cost / best;
    row.result = std::move(r);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string eval_csv(const std::vector<ModelResult>& results) {
  std::ostringstream out;
  out << "model,plan,mean_cost,std_cost,max_dev,n_failed\n";
  for (const auto& r : results)
    out << r.model << ',' << r.plan << ',' << fixed(r.mean_cost) << ',' << fixed(r.std_cost) << ','
        << fixed(r.max_deviation) << ',' << r.n_failed << '\n';
  return out.str();
}

std::string compare_csv(const CompareReport& report) {
  std::ostringstream out;
  out << "model,plan,mean_cost,std_cost,gap_pct,gap_std_pct\n";
  for (const auto& row : report.rows)
    out << row.result.model << ',' << row.result.plan << ',' << fixed(row.result.mean_cost) << ','
        << fixed(row.result.std_cost) << ',' << fixed(row.gap_pct) << ',' << fixed(row.gap_std_pct) << '\n';
  return out.str();
}

std::string compare_table(const CompareReport& report) {
  const std::vector<std::string> head{"Model", "Imp Costs", "(± std)", "GAP %", "Training (Min)",
                                      "Execution (s/decision)"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& row : report.rows) {
    const auto& r = row.result;
    cells.push_back({r.model, fixed(r.mean_cost, 2), fixed(r.std_cost, 2),
                     fixed(row.gap_pct, 2) + " (± " + fixed(row.gap_std_pct, 2) + ")",
                     fixed(r.train_seconds / 60.0, 3), [&] {
                       char buf[32];
                       std::snprintf(buf, sizeof buf, "%.3e", r.seconds_per_decision);
                       return std::string(buf);
                     }()});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const auto& s = cells[i][c];
      const auto pad = std::string(width[c] - s.size(), ' ');
      out << (c == 0 ? s + pad : "  " + pad + s);
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

std::string compare_metadata(const CompareReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows)
    rows.push_back({{"model", row.result.model},
                    {"train_seconds", row.result.train_seconds},
                    {"seconds_per_decision", row.result.seconds_per_decision},
                    {"n_failed", row.result.n_failed}});
  return nlohmann::json{{"rows", rows}}.dump(1);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace tsgdr::bench
