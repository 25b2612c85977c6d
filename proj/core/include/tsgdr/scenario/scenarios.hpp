#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsgdr/model/case.hpp"
#include "tsgdr/random.hpp"

namespace tsgdr::scenario {

enum class Mode { lattice, historical };

/// One realization of the stage inflow vector (hm3 per hydro).
struct LatticeNode {
  Eigen::VectorXd inflow;
  double probability = 0.0;
};

/// A full-horizon inflow trajectory. Row t holds stage t+1. Row 0 is the
/// first-stage inflow, which is fixed and identical for every path.
struct ScenarioPath {
  Eigen::MatrixXd inflows;  // T x n_hydros
  std::string source_id;

  int horizon() const { return static_cast<int>(inflows.rows()); }
};

/// Exogenous inflow process: either a stagewise-independent lattice or a
/// list of historical full-horizon paths.
class ScenarioSet {
 public:
  static ScenarioSet lattice(std::vector<std::vector<LatticeNode>> stages);
  static ScenarioSet historical(std::vector<Eigen::MatrixXd> paths);

  Mode mode() const { return mode_; }
  int horizon() const { return horizon_; }
  std::size_t n_hydros() const { return n_hydros_; }

  /// Lattice mode only: realizations per stage.
  const std::vector<std::vector<LatticeNode>>& stages() const { return stages_; }
  /// Historical mode only.
  const std::vector<Eigen::MatrixXd>& paths() const { return paths_; }

  /// The deterministic first-stage inflow w_1: the expected stage-1 value.
  const Eigen::VectorXd& first_stage_inflow() const { return first_stage_; }

  /// Lattice realizations used at stage t (1-based); stage 1 collapses to
  /// the single node {first_stage_inflow(), 1}.
  std::vector<LatticeNode> stage_support(int t) const;

  std::size_t size() const;

 private:
  void finish();

  Mode mode_ = Mode::lattice;
  int horizon_ = 0;
  std::size_t n_hydros_ = 0;
  std::vector<std::vector<LatticeNode>> stages_;
  std::vector<Eigen::MatrixXd> paths_;
  Eigen::VectorXd first_stage_;
};

/// Draws `count` paths. Lattice: each stage t >= 2 independently by the node
/// probabilities. Historical: whole rows uniformly with replacement.
std::vector<ScenarioPath> sample_paths(const ScenarioSet& set, std::size_t count,
                                       std::uint64_t seed);

/// Endless sampler of fixed-size training batches.
class TrainSampler {
 public:
  TrainSampler(const ScenarioSet* set, std::vector<std::size_t> pool,
               std::size_t batch_size, std::uint64_t seed);

  std::vector<ScenarioPath> next_batch();
  std::size_t batch_size() const { return batch_size_; }

 private:
  const ScenarioSet* set_;
  std::vector<std::size_t> pool_;  // historical rows reserved for training
  std::size_t batch_size_;
  Rng rng_;
};

struct DataSplit {
  TrainSampler train;
  std::vector<ScenarioPath> validation;
  std::vector<ScenarioPath> test;
};

/// Train/validation/test split with independent seed streams, so the test
/// set depends only on (set, n_test, seed). The ScenarioSet must outlive the
/// returned sampler.
DataSplit split(const ScenarioSet& set, std::size_t train_batch, std::size_t n_val,
                std::size_t n_test, std::uint64_t seed);

/// Test paths for (set, n_test, seed), identical to split(...).test.
std::vector<ScenarioPath> test_paths(const ScenarioSet& set, std::size_t n_test,
                                     std::uint64_t seed);

ScenarioSet parse_scenarios(const std::string& csv_text, std::size_t n_hydros,
                            int horizon);
ScenarioSet load_scenarios(const std::filesystem::path& path, std::size_t n_hydros,
                           int horizon);
std::string dump_scenarios(const ScenarioSet& set);
void save_scenarios(const ScenarioSet& set, const std::filesystem::path& path);
/// Fingerprint of the canonical CSV form.
std::uint64_t scenario_hash(const ScenarioSet& set);

/// Checks probabilities, signs and dimensions against a case.
void check_compatible(const ScenarioSet& set, const model::GridCase& grid);

/// Lattice with `points` realizations per stage (low .. high), centred on a
/// seasonal mean of half the full-power release of each reservoir.
ScenarioSet synthesize_lattice(const model::GridCase& grid, int points,
                               std::uint64_t seed, double spread = 0.5);

/// Serially correlated lognormal paths, for historical-mode experiments.
ScenarioSet synthesize_historical(const model::GridCase& grid, std::size_t n_paths,
                                  std::uint64_t seed);

/// Repeats stages 2..T cyclically to reach `horizon` stages.
ScenarioSet with_horizon(const ScenarioSet& set, int horizon);

}  // namespace tsgdr::scenario

namespace tsgdr::model {
/// Repeats demand and cost profiles cyclically to reach `horizon` stages.
GridCase with_horizon(const GridCase& grid, int horizon);
}  // namespace tsgdr::model
