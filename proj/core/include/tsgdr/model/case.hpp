#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tsgdr::model {

enum class GeneratorKind { thermal, hydro };

struct Bus {
  int id = 0;
  std::vector<double> demand;  // MW per stage
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double b = 0.0;      // susceptance
  double g = 0.0;      // conductance
  double limit = 0.0;  // thermal limit, MW

  /// Quadratic loss coefficient g / (g^2 + b^2), in 1/MW.
  double loss_coefficient() const { return g / (g * g + b * b); }
};

struct Generator {
  int id = 0;
  int bus = 0;
  std::vector<double> cost;  // USD/MWh per stage
  double p_min = 0.0;
  double p_max = 0.0;
  GeneratorKind kind = GeneratorKind::thermal;
};

/// A reservoir attached to a hydro generator. Upstream sets hold hydro
/// indices (positions in GridCase::hydros) whose turbined or spilled water
/// flows into this reservoir within the same stage.
struct HydroUnit {
  int generator = 0;  // Generator::id
  double v_min = 0.0;
  double v_max = 0.0;
  double v0 = 0.0;
  /// Volume used per unit of energy: u [hm3] = phi * p [MW] * stage_hours.
  double production_factor = 0.0;
  std::vector<int> upstream_turbine;
  std::vector<int> upstream_spill;
};

/// Static description of the system. Treat as immutable once validated.
struct GridCase {
  int horizon = 0;
  double stage_hours = 1.0;
  int reference_bus = 0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<HydroUnit> hydros;

  std::size_t n_hydros() const { return hydros.size(); }

  /// Position of a bus in `buses`; throws ValidationError for unknown ids.
  std::size_t bus_index(int id) const;
  /// Position of a generator in `generators`; throws for unknown ids.
  std::size_t generator_index(int id) const;

  const Generator& hydro_generator(std::size_t hydro) const {
    return generators[generator_index(hydros[hydro].generator)];
  }

  double max_marginal_cost() const;
  std::vector<double> v_min() const;
  std::vector<double> v_max() const;
  std::vector<double> v0() const;

  bool operator==(const GridCase&) const = default;
};

/// Checks every structural invariant; throws ValidationError naming the
/// violated invariant and the entity.
void validate(const GridCase& grid);

/// Hydro indices ordered so that every upstream unit precedes its
/// downstream units. Throws ValidationError("cascade cycle ...") otherwise.
std::vector<std::size_t> cascade_order(const GridCase& grid);

/// Hydros that release into no other hydro (cascade sinks).
std::vector<std::size_t> cascade_sinks(const GridCase& grid);

GridCase parse_case(const std::string& json_text);
std::string dump_case(const GridCase& grid);

GridCase load_case(const std::filesystem::path& path);
void save_case(const GridCase& grid, const std::filesystem::path& path);

/// Stable 64-bit fingerprint of the canonical JSON form of the case.
std::uint64_t case_hash(const GridCase& grid);

/// Deterministic synthetic case: a random spanning tree plus a few loops,
/// thermal capacity covering 1.3x peak demand on its own, and a hydro cascade.
GridCase synthesize_case(int n_buses, int n_hydros, std::uint64_t seed,
                         int horizon = 12);

}  // namespace tsgdr::model
