#include "tsgdr/scenario/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tsgdr/error.hpp"
#include "tsgdr/hash.hpp"

namespace tsgdr::scenario {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

std::size_t draw_node(const std::vector<LatticeNode>& nodes, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    acc += nodes[k].probability;
    if (u < acc) return k;
  }
  return nodes.size() - 1;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

}  // namespace

ScenarioSet ScenarioSet::lattice(std::vector<std::vector<LatticeNode>> stages) {
  ScenarioSet set;
  set.mode_ = Mode::lattice;
  set.stages_ = std::move(stages);
  set.finish();
  return set;
}

ScenarioSet ScenarioSet::historical(std::vector<Eigen::MatrixXd> paths) {
  ScenarioSet set;
  set.mode_ = Mode::historical;
  set.paths_ = std::move(paths);
  set.finish();
  return set;
}

void ScenarioSet::finish() {
  if (mode_ == Mode::lattice) {
    if (stages_.empty()) throw ValidationError("scenario set: lattice has no stages");
    horizon_ = static_cast<int>(stages_.size());
    if (stages_.front().empty())
      throw ValidationError("scenario set: stage 1 has no realizations");
    n_hydros_ = static_cast<std::size_t>(stages_.front().front().inflow.size());
    for (std::size_t t = 0; t < stages_.size(); ++t) {
      const std::string who = "scenario set: stage " + std::to_string(t + 1);
      if (stages_[t].empty()) throw ValidationError(who + ": no realizations");
      double total = 0.0;
      for (const auto& node : stages_[t]) {
        if (static_cast<std::size_t>(node.inflow.size()) != n_hydros_)
          throw DimensionError(who + ": inflow dimension mismatch");
        if ((node.inflow.array() < 0.0).any() || !node.inflow.allFinite())
          throw ValidationError(who + ": negative or non-finite inflow");
        if (!(node.probability >= 0.0))
          throw ValidationError(who + ": negative probability");
        total += node.probability;
      }
      if (std::abs(total - 1.0) > kProbabilityTolerance)
        throw ValidationError(who + ": probabilities sum to " +
                              std::to_string(total) + ", expected 1");
    }
    first_stage_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_hydros_));
    for (const auto& node : stages_.front())
      first_stage_ += node.probability * node.inflow;
  } else {
    if (paths_.empty()) throw ValidationError("scenario set: no historical paths");
    horizon_ = static_cast<int>(paths_.front().rows());
    n_hydros_ = static_cast<std::size_t>(paths_.front().cols());
    first_stage_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_hydros_));
    for (std::size_t r = 0; r < paths_.size(); ++r) {
      const auto& p = paths_[r];
      if (p.rows() != horizon_ || static_cast<std::size_t>(p.cols()) != n_hydros_)
        throw DimensionError("scenario set: path " + std::to_string(r) +
                             " has inconsistent dimensions");
      if ((p.array() < 0.0).any() || !p.allFinite())
        throw ValidationError("scenario set: path " + std::to_string(r) +
                              " has negative or non-finite inflow");
      first_stage_ += p.row(0).transpose();
    }
    first_stage_ /= static_cast<double>(paths_.size());
  }
  if (horizon_ < 1) throw ValidationError("scenario set: empty horizon");
}

std::vector<LatticeNode> ScenarioSet::stage_support(int t) const {
  if (mode_ != Mode::lattice)
    throw ValidationError("stage_support requires a lattice scenario set");
  if (t < 1 || t > horizon_) throw DimensionError("stage_support: stage out of range");
  if (t == 1) return {LatticeNode{first_stage_, 1.0}};
  return stages_[static_cast<std::size_t>(t - 1)];
}

std::size_t ScenarioSet::size() const {
  return mode_ == Mode::lattice ? stages_.size() : paths_.size();
}

std::vector<ScenarioPath> sample_paths(const ScenarioSet& set, std::size_t count,
                                       std::uint64_t seed) {
  if (set.size() == 0) throw ValidationError("sample_paths: empty scenario set");
  Rng rng(seed);
  const auto T = set.horizon();
  const auto n = static_cast<Eigen::Index>(set.n_hydros());
  std::vector<ScenarioPath> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    ScenarioPath path;
    path.inflows.resize(T, n);
    path.inflows.row(0) = set.first_stage_inflow().transpose();
    if (set.mode() == Mode::lattice) {
      std::string id = "L:0";
      for (int t = 1; t < T; ++t) {
        const auto& nodes = set.stages()[static_cast<std::size_t>(t)];
        const std::size_t k = draw_node(nodes, rng.uniform());
        path.inflows.row(t) = nodes[k].inflow.transpose();
        id += "." + std::to_string(k);
      }
      path.source_id = std::move(id);
    } else {
      const std::size_t r = rng.index(set.paths().size());
      path.inflows.bottomRows(T - 1) = set.paths()[r].bottomRows(T - 1);
      path.source_id = "H:" + std::to_string(r);
    }
    out.push_back(std::move(path));
  }
  return out;
}

TrainSampler::TrainSampler(const ScenarioSet* set, std::vector<std::size_t> pool,
                           std::size_t batch_size, std::uint64_t seed)
    : set_(set), pool_(std::move(pool)), batch_size_(batch_size), rng_(seed) {
  if (batch_size_ == 0) throw ValidationError("train batch size must be >= 1");
}

std::vector<ScenarioPath> TrainSampler::next_batch() {
  if (set_->mode() == Mode::lattice)
    return sample_paths(*set_, batch_size_, rng_.next());
  std::vector<ScenarioPath> batch;
  for (std::size_t s = 0; s < batch_size_; ++s) {
    const std::size_t r = pool_[rng_.index(pool_.size())];
    ScenarioPath path;
    path.inflows = set_->paths()[r];
    path.inflows.row(0) = set_->first_stage_inflow().transpose();
    path.source_id = "H:" + std::to_string(r);
    batch.push_back(std::move(path));
  }
  return batch;
}

namespace {

std::vector<std::size_t> historical_permutation(const ScenarioSet& set,
                                                std::uint64_t seed) {
  std::vector<std::size_t> rows(set.paths().size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 4));
  for (std::size_t i = rows.size(); i > 1; --i)
    std::swap(rows[i - 1], rows[rng.index(i)]);
  return rows;
}

ScenarioPath historical_row(const ScenarioSet& set, std::size_t r) {
  ScenarioPath path;
  path.inflows = set.paths()[r];
  path.inflows.row(0) = set.first_stage_inflow().transpose();
  path.source_id = "H:" + std::to_string(r);
  return path;
}

}  // namespace

DataSplit split(const ScenarioSet& set, std::size_t train_batch, std::size_t n_val,
                std::size_t n_test, std::uint64_t seed) {
  if (set.mode() == Mode::lattice) {
    return DataSplit{TrainSampler(&set, {}, train_batch, mix_seed(seed, 1)),
                     sample_paths(set, n_val, mix_seed(seed, 2)),
                     sample_paths(set, n_test, mix_seed(seed, 3))};
  }
  const auto rows = historical_permutation(set, seed);
  if (n_test + n_val >= rows.size())
    throw ValidationError("split: insufficient historical paths (" +
                          std::to_string(rows.size()) + ") for " +
                          std::to_string(n_test) + " test + " +
                          std::to_string(n_val) + " validation + training");
  std::vector<ScenarioPath> test, val;
  for (std::size_t i = 0; i < n_test; ++i) test.push_back(historical_row(set, rows[i]));
  for (std::size_t i = n_test; i < n_test + n_val; ++i)
    val.push_back(historical_row(set, rows[i]));
  std::vector<std::size_t> pool(rows.begin() + static_cast<std::ptrdiff_t>(n_test + n_val),
                                rows.end());
  return DataSplit{TrainSampler(&set, std::move(pool), train_batch, mix_seed(seed, 1)),
                   std::move(val), std::move(test)};
}

std::vector<ScenarioPath> test_paths(const ScenarioSet& set, std::size_t n_test,
                                     std::uint64_t seed) {
  if (set.mode() == Mode::lattice) return sample_paths(set, n_test, mix_seed(seed, 3));
  const auto rows = historical_permutation(set, seed);
  if (n_test > rows.size())
    throw ValidationError("test_paths: insufficient historical paths");
  std::vector<ScenarioPath> test;
  for (std::size_t i = 0; i < n_test; ++i) test.push_back(historical_row(set, rows[i]));
  return test;
}

ScenarioSet parse_scenarios(const std::string& csv_text, std::size_t n_hydros,
                            int horizon) {
  std::stringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("scenarios: empty file");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"stage", "hydro", "value"})
    if (!col.count(required))
      throw ParseError(std::string("scenarios: missing column '") + required + "'");
  const bool historical = col.count("path") > 0;
  const bool has_prob = col.count("prob") > 0;
  if (!historical && !has_prob)
    throw ParseError("scenarios: lattice mode requires a 'prob' column");

  const auto T = static_cast<std::size_t>(horizon);
  // lattice: occurrence count per (stage, hydro) gives the realization index
  std::vector<std::vector<std::vector<std::pair<double, double>>>> lattice(
      T, std::vector<std::vector<std::pair<double, double>>>(n_hydros));
  std::map<long, Eigen::MatrixXd> paths;
  std::map<long, Eigen::MatrixXi> seen;

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("scenarios: line " + std::to_string(lineno) +
                       ": wrong number of columns");
    long stage = 0, hydro = 0, path = 0;
    double value = 0.0, prob = 1.0;
    try {
      stage = std::stol(cells[col["stage"]]);
      hydro = std::stol(cells[col["hydro"]]);
      value = std::stod(cells[col["value"]]);
      if (has_prob) prob = std::stod(cells[col["prob"]]);
      if (historical) path = std::stol(cells[col["path"]]);
    } catch (const std::exception&) {
      throw ParseError("scenarios: line " + std::to_string(lineno) +
                       ": non-numeric field");
    }
    if (stage < 1 || static_cast<std::size_t>(stage) > T)
      throw ParseError("scenarios: line " + std::to_string(lineno) +
                       ": stage out of range 1.." + std::to_string(T));
    if (hydro < 0 || static_cast<std::size_t>(hydro) >= n_hydros)
      throw ParseError("scenarios: line " + std::to_string(lineno) +
                       ": hydro out of range");
    const auto t = static_cast<std::size_t>(stage - 1);
    const auto j = static_cast<std::size_t>(hydro);
    if (historical) {
      auto [it, inserted] = paths.try_emplace(
          path, Eigen::MatrixXd::Zero(horizon, static_cast<Eigen::Index>(n_hydros)));
      if (inserted)
        seen.emplace(path, Eigen::MatrixXi::Zero(horizon,
                                                 static_cast<Eigen::Index>(n_hydros)));
      it->second(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = value;
      seen[path](static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) += 1;
    } else {
      lattice[t][j].push_back({value, prob});
    }
  }

  if (historical) {
    std::vector<Eigen::MatrixXd> rows;
    for (auto& [id, m] : paths) {
      if ((seen[id].array() != 1).any())
        throw ParseError("scenarios: path " + std::to_string(id) +
                         " does not define every (stage, hydro) exactly once");
      rows.push_back(std::move(m));
    }
    return ScenarioSet::historical(std::move(rows));
  }

  std::vector<std::vector<LatticeNode>> stages(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t count = lattice[t][0].size();
    for (std::size_t j = 0; j < n_hydros; ++j)
      if (lattice[t][j].size() != count)
        throw ParseError("scenarios: stage " + std::to_string(t + 1) +
                         ": hydros have different realization counts");
    for (std::size_t k = 0; k < count; ++k) {
      LatticeNode node;
      node.inflow.resize(static_cast<Eigen::Index>(n_hydros));
      node.probability = lattice[t][0][k].second;
      for (std::size_t j = 0; j < n_hydros; ++j) {
        node.inflow(static_cast<Eigen::Index>(j)) = lattice[t][j][k].first;
        if (lattice[t][j][k].second != node.probability)
          throw ParseError("scenarios: stage " + std::to_string(t + 1) +
                           ": realization " + std::to_string(k) +
                           " has inconsistent probabilities");
      }
      stages[t].push_back(std::move(node));
    }
  }
  return ScenarioSet::lattice(std::move(stages));
}

ScenarioSet load_scenarios(const std::filesystem::path& path, std::size_t n_hydros,
                           int horizon) {
  std::ifstream in(path);
  if (!in) throw ParseError("scenarios: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenarios(buffer.str(), n_hydros, horizon);
}

std::string dump_scenarios(const ScenarioSet& set) {
  std::ostringstream out;
  out.precision(17);
  if (set.mode() == Mode::lattice) {
    out << "stage,hydro,value,prob\n";
    for (std::size_t t = 0; t < set.stages().size(); ++t)
      for (const auto& node : set.stages()[t])
        for (Eigen::Index j = 0; j < node.inflow.size(); ++j)
          out << t + 1 << ',' << j << ',' << node.inflow(j) << ','
              << node.probability << '\n';
  } else {
    out << "path,stage,hydro,value\n";
    for (std::size_t r = 0; r < set.paths().size(); ++r)
      for (Eigen::Index t = 0; t < set.paths()[r].rows(); ++t)
        for (Eigen::Index j = 0; j < set.paths()[r].cols(); ++j)
          out << r << ',' << t + 1 << ',' << j << ',' << set.paths()[r](t, j) << '\n';
  }
  return out.str();
}

void save_scenarios(const ScenarioSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_scenarios(set);
}

std::uint64_t scenario_hash(const ScenarioSet& set) { return fnv1a(dump_scenarios(set)); }

void check_compatible(const ScenarioSet& set, const model::GridCase& grid) {
  if (set.n_hydros() != grid.n_hydros())
    throw DimensionError("scenario set has " + std::to_string(set.n_hydros()) +
                         " hydros, case has " + std::to_string(grid.n_hydros()));
  if (set.horizon() != grid.horizon)
    throw DimensionError("scenario horizon " + std::to_string(set.horizon()) +
                         " != case horizon " + std::to_string(grid.horizon));
}

namespace {

Eigen::VectorXd mean_release(const model::GridCase& grid, int t) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(grid.n_hydros()));
  for (std::size_t j = 0; j < grid.n_hydros(); ++j) {
    const auto& h = grid.hydros[j];
    const double full = h.production_factor * grid.hydro_generator(j).p_max *
                        grid.stage_hours;
    // wet/dry season with a one-year period
    const double season = 1.0 + 0.4 * std::cos(2.0 * std::numbers::pi * t / 12.0);
    m(static_cast<Eigen::Index>(j)) = 0.5 * full * season;
  }
  return m;
}

}  // namespace

ScenarioSet synthesize_lattice(const model::GridCase& grid, int points,
                               std::uint64_t seed, double spread) {
  if (points < 1) throw ValidationError("synthesize_lattice: points must be >= 1");
  Rng rng(mix_seed(seed, 0x1a77));
  std::vector<std::vector<LatticeNode>> stages;
  for (int t = 0; t < grid.horizon; ++t) {
    const Eigen::VectorXd mean = mean_release(grid, t);
    std::vector<LatticeNode> nodes;
    for (int k = 0; k < points; ++k) {
      const double level =
          points == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(k) / (points - 1);
      LatticeNode node;
      node.inflow = mean;
      for (Eigen::Index j = 0; j < node.inflow.size(); ++j)
        node.inflow(j) *= std::max(0.0, 1.0 + spread * level + 0.05 * rng.uniform(-1.0, 1.0));
      node.probability = 1.0 / points;
      nodes.push_back(std::move(node));
    }
    // make the probabilities sum to one exactly in floating point
    double rest = 1.0;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) rest -= nodes[k].probability;
    nodes.back().probability = rest;
    stages.push_back(std::move(nodes));
  }
  return ScenarioSet::lattice(std::move(stages));
}

ScenarioSet synthesize_historical(const model::GridCase& grid, std::size_t n_paths,
                                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x4157));
  const auto n = static_cast<Eigen::Index>(grid.n_hydros());
  std::vector<Eigen::MatrixXd> paths;
  for (std::size_t r = 0; r < n_paths; ++r) {
    Eigen::MatrixXd p(grid.horizon, n);
    double state = 0.0;
    for (int t = 0; t < grid.horizon; ++t) {
      state = 0.7 * state + 0.35 * rng.normal();
      const Eigen::VectorXd mean = mean_release(grid, t);
      for (Eigen::Index j = 0; j < n; ++j)
        p(t, j) = mean(j) * std::exp(state + 0.1 * rng.normal() - 0.08);
    }
    paths.push_back(std::move(p));
  }
  return ScenarioSet::historical(std::move(paths));
}

ScenarioSet with_horizon(const ScenarioSet& set, int horizon) {
  if (horizon < 2) throw ValidationError("with_horizon: horizon must be >= 2");
  const int T = set.horizon();
  auto source_row = [T](int t) { return t < T ? t : 1 + (t - 1) % (T - 1); };
  if (set.mode() == Mode::lattice) {
    std::vector<std::vector<LatticeNode>> stages;
    for (int t = 0; t < horizon; ++t)
      stages.push_back(set.stages()[static_cast<std::size_t>(source_row(t))]);
    return ScenarioSet::lattice(std::move(stages));
  }
  std::vector<Eigen::MatrixXd> paths;
  for (const auto& p : set.paths()) {
    Eigen::MatrixXd q(horizon, p.cols());
    for (int t = 0; t < horizon; ++t) q.row(t) = p.row(source_row(t));
    paths.push_back(std::move(q));
  }
  return ScenarioSet::historical(std::move(paths));
}

}  // namespace tsgdr::scenario

namespace tsgdr::model {

GridCase with_horizon(const GridCase& grid, int horizon) {
  if (horizon < 2) throw ValidationError("with_horizon: horizon must be >= 2");
  GridCase out = grid;
  out.horizon = horizon;
  const auto T = static_cast<std::size_t>(grid.horizon);
  auto extend = [&](const std::vector<double>& v) {
    std::vector<double> r(static_cast<std::size_t>(horizon));
    for (std::size_t t = 0; t < r.size(); ++t) r[t] = v[t % T];
    return r;
  };
  for (auto& b : out.buses) b.demand = extend(b.demand);
  for (auto& g : out.generators) g.cost = extend(g.cost);
  validate(out);
  return out;
}

}  // namespace tsgdr::model
