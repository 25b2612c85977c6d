#include "tsgdr/model/case.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/hash.hpp"

namespace tsgdr::model {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw ValidationError(what); }

std::string gen_kind_name(GeneratorKind k) {
  return k == GeneratorKind::hydro ? "hydro" : "thermal";
}

}  // namespace

std::size_t GridCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  fail("unknown bus id " + std::to_string(id));
}

std::size_t GridCase::generator_index(int id) const {
  for (std::size_t i = 0; i < generators.size(); ++i)
    if (generators[i].id == id) return i;
  fail("unknown generator id " + std::to_string(id));
}

double GridCase::max_marginal_cost() const {
  double m = 0.0;
  for (const auto& g : generators)
    for (double c : g.cost) m = std::max(m, c);
  return m;
}

std::vector<double> GridCase::v_min() const {
  std::vector<double> v;
  for (const auto& h : hydros) v.push_back(h.v_min);
  return v;
}

std::vector<double> GridCase::v_max() const {
  std::vector<double> v;
  for (const auto& h : hydros) v.push_back(h.v_max);
  return v;
}

std::vector<double> GridCase::v0() const {
  std::vector<double> v;
  for (const auto& h : hydros) v.push_back(h.v0);
  return v;
}

std::vector<std::size_t> cascade_order(const GridCase& grid) {
  const std::size_t n = grid.hydros.size();
  // Kahn's algorithm on edges upstream -> downstream.
  std::vector<std::vector<std::size_t>> down(n);
  std::vector<int> indegree(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    std::set<int> ups(grid.hydros[j].upstream_turbine.begin(),
                      grid.hydros[j].upstream_turbine.end());
    ups.insert(grid.hydros[j].upstream_spill.begin(),
               grid.hydros[j].upstream_spill.end());
    for (int k : ups) {
      if (k < 0 || static_cast<std::size_t>(k) >= n)
        fail("hydro " + std::to_string(j) + ": unknown upstream hydro " +
             std::to_string(k));
      down[static_cast<std::size_t>(k)].push_back(j);
      ++indegree[j];
    }
  }
  std::vector<std::size_t> order;
  std::vector<std::size_t> ready;
  for (std::size_t j = 0; j < n; ++j)
    if (indegree[j] == 0) ready.push_back(j);
  while (!ready.empty()) {
    const std::size_t j = ready.front();
    ready.erase(ready.begin());
    order.push_back(j);
    for (std::size_t d : down[j])
      if (--indegree[d] == 0) ready.push_back(d);
  }
  if (order.size() != n) {
    for (std::size_t j = 0; j < n; ++j)
      if (indegree[j] > 0)
        fail("cascade cycle through hydro " + std::to_string(j));
  }
  return order;
}

std::vector<std::size_t> cascade_sinks(const GridCase& grid) {
  const std::size_t n = grid.hydros.size();
  std::vector<bool> feeds(n, false);
  for (const auto& h : grid.hydros) {
    for (int k : h.upstream_turbine) feeds[static_cast<std::size_t>(k)] = true;
    for (int k : h.upstream_spill) feeds[static_cast<std::size_t>(k)] = true;
  }
  std::vector<std::size_t> sinks;
  for (std::size_t j = 0; j < n; ++j)
    if (!feeds[j]) sinks.push_back(j);
  return sinks;
}

void validate(const GridCase& grid) {
  const auto T = static_cast<std::size_t>(grid.horizon);
  if (grid.horizon < 2) fail("horizon must be >= 2");
  if (!(grid.stage_hours > 0.0)) fail("stage_hours must be > 0");
  if (grid.buses.empty()) fail("case has no buses");

  std::set<int> bus_ids;
  for (const auto& b : grid.buses) {
    const std::string who = "bus " + std::to_string(b.id);
    if (!bus_ids.insert(b.id).second) fail(who + ": duplicate id");
    if (b.demand.size() != T) fail(who + ": demand length != horizon");
    for (double d : b.demand)
      if (!(d >= 0.0)) fail(who + ": negative demand");
  }
  if (!bus_ids.count(grid.reference_bus))
    fail("reference bus " + std::to_string(grid.reference_bus) +
         " does not exist");

  for (std::size_t e = 0; e < grid.branches.size(); ++e) {
    const auto& br = grid.branches[e];
    const std::string who = "branch " + std::to_string(e);
    if (!bus_ids.count(br.from_bus) || !bus_ids.count(br.to_bus))
      fail(who + ": endpoint bus does not exist");
    if (br.from_bus == br.to_bus) fail(who + ": from_bus == to_bus");
    if (!(br.limit > 0.0)) fail(who + ": thermal limit must be > 0");
    if (!(br.g * br.g + br.b * br.b > 0.0)) fail(who + ": g^2 + b^2 must be > 0");
  }

  std::set<int> gen_ids;
  for (const auto& g : grid.generators) {
    const std::string who = "generator " + std::to_string(g.id);
    if (!gen_ids.insert(g.id).second) fail(who + ": duplicate id");
    if (!bus_ids.count(g.bus)) fail(who + ": bus does not exist");
    if (g.cost.size() != T) fail(who + ": cost length != horizon");
    for (double c : g.cost)
      if (!(c >= 0.0)) fail(who + ": negative cost");
    if (!(g.p_min >= 0.0 && g.p_min <= g.p_max))
      fail(who + ": requires 0 <= pmin <= pmax");
  }

  std::set<int> hydro_gens;
  std::vector<int> turbine_parent(grid.hydros.size(), -1);
  std::vector<int> spill_parent(grid.hydros.size(), -1);
  for (std::size_t j = 0; j < grid.hydros.size(); ++j) {
    const auto& h = grid.hydros[j];
    const std::string who = "hydro " + std::to_string(j);
    if (!gen_ids.count(h.generator)) fail(who + ": generator does not exist");
    if (grid.generators[grid.generator_index(h.generator)].kind !=
        GeneratorKind::hydro)
      fail(who + ": generator " + std::to_string(h.generator) +
           " is not hydro-kind");
    if (!hydro_gens.insert(h.generator).second)
      fail(who + ": generator shared with another hydro");
    if (!(h.v_min <= h.v0 && h.v0 <= h.v_max))
      fail(who + ": requires vmin <= v0 <= vmax");
    if (!(h.production_factor > 0.0)) fail(who + ": phi must be > 0");
    for (int k : h.upstream_turbine) {
      if (k < 0 || static_cast<std::size_t>(k) >= grid.hydros.size())
        fail(who + ": unknown upstream hydro " + std::to_string(k));
      if (turbine_parent[static_cast<std::size_t>(k)] >= 0)
        fail("hydro " + std::to_string(k) + ": turbines into two reservoirs");
      turbine_parent[static_cast<std::size_t>(k)] = static_cast<int>(j);
    }
    for (int k : h.upstream_spill) {
      if (k < 0 || static_cast<std::size_t>(k) >= grid.hydros.size())
        fail(who + ": unknown upstream hydro " + std::to_string(k));
      if (spill_parent[static_cast<std::size_t>(k)] >= 0)
        fail("hydro " + std::to_string(k) + ": spills into two reservoirs");
      spill_parent[static_cast<std::size_t>(k)] = static_cast<int>(j);
    }
  }
  for (const auto& g : grid.generators)
    if (g.kind == GeneratorKind::hydro && !hydro_gens.count(g.id))
      fail("generator " + std::to_string(g.id) + ": hydro-kind without reservoir");

  cascade_order(grid);
}

GridCase parse_case(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("case: malformed JSON: ") + e.what());
  }
  GridCase grid;
  try {
    grid.horizon = doc.at("horizon").get<int>();
    grid.stage_hours = doc.at("stage_hours").get<double>();
    grid.reference_bus = doc.at("reference_bus").get<int>();
    for (const auto& b : doc.at("buses"))
      grid.buses.push_back({b.at("id").get<int>(),
                            b.at("demand").get<std::vector<double>>()});
    for (const auto& br : doc.at("branches"))
      grid.branches.push_back({br.at("from").get<int>(), br.at("to").get<int>(),
                               br.at("b").get<double>(), br.at("g").get<double>(),
                               br.at("limit").get<double>()});
    for (const auto& g : doc.at("generators")) {
      Generator gen;
      gen.id = g.at("id").get<int>();
      gen.bus = g.at("bus").get<int>();
      gen.cost = g.at("cost").get<std::vector<double>>();
      gen.p_min = g.at("pmin").get<double>();
      gen.p_max = g.at("pmax").get<double>();
      const auto kind = g.at("kind").get<std::string>();
      if (kind == "thermal")
        gen.kind = GeneratorKind::thermal;
      else if (kind == "hydro")
        gen.kind = GeneratorKind::hydro;
      else
        throw ParseError("case: generator " + std::to_string(gen.id) +
                         ": unknown kind '" + kind + "'");
      grid.generators.push_back(std::move(gen));
    }
    for (const auto& h : doc.at("hydros")) {
      HydroUnit unit;
      unit.generator = h.at("generator").get<int>();
      unit.v_min = h.at("vmin").get<double>();
      unit.v_max = h.at("vmax").get<double>();
      unit.v0 = h.at("v0").get<double>();
      unit.production_factor = h.at("phi").get<double>();
      unit.upstream_turbine = h.value("upstream_turbine", std::vector<int>{});
      unit.upstream_spill = h.value("upstream_spill", std::vector<int>{});
      grid.hydros.push_back(std::move(unit));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("case: ") + e.what());
  }
  validate(grid);
  return grid;
}

std::string dump_case(const GridCase& grid) {
  json doc;
  doc["horizon"] = grid.horizon;
  doc["stage_hours"] = grid.stage_hours;
  doc["reference_bus"] = grid.reference_bus;
  doc["buses"] = json::array();
  for (const auto& b : grid.buses)
    doc["buses"].push_back({{"id", b.id}, {"demand", b.demand}});
  doc["branches"] = json::array();
  for (const auto& br : grid.branches)
    doc["branches"].push_back({{"from", br.from_bus},
                               {"to", br.to_bus},
                               {"b", br.b},
                               {"g", br.g},
                               {"limit", br.limit}});
  doc["generators"] = json::array();
  for (const auto& g : grid.generators)
    doc["generators"].push_back({{"id", g.id},
                                 {"bus", g.bus},
                                 {"cost", g.cost},
                                 {"pmin", g.p_min},
                                 {"pmax", g.p_max},
                                 {"kind", gen_kind_name(g.kind)}});
  doc["hydros"] = json::array();
  for (const auto& h : grid.hydros)
    doc["hydros"].push_back({{"generator", h.generator},
                             {"vmin", h.v_min},
                             {"vmax", h.v_max},
                             {"v0", h.v0},
                             {"phi", h.production_factor},
                             {"upstream_turbine", h.upstream_turbine},
                             {"upstream_spill", h.upstream_spill}});
  return doc.dump(2);
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("case: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_case(buffer.str());
}

void save_case(const GridCase& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_case(grid) << '\n';
}

std::uint64_t case_hash(const GridCase& grid) { return fnv1a(dump_case(grid)); }

}  // namespace tsgdr::model
