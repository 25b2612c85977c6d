#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsgdr/error.hpp"
#include "tsgdr/policy/policy.hpp"

namespace tsgdr::policy {

using Eigen::Index;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr int kVersion = 1;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex(const std::string& s) {
  if (s.empty() || s.size() > 16) throw ParseError("checkpoint: bad hash '" + s + "'");
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw ParseError("checkpoint: bad hash '" + s + "'");
  return v;
}

json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

std::string dump_checkpoint(const Checkpoint& checkpoint) {
  const auto& spec = checkpoint.params.spec;
  json j;
  j["format"] = "tsgdr-checkpoint";
  j["version"] = kVersion;
  j["kind"] = to_string(spec.kind);
  j["n_hydros"] = spec.n_hydros;
  j["v_min"] = to_json(spec.v_min);
  j["v_max"] = to_json(spec.v_max);
  j["inflow_scale"] = to_json(spec.inflow_scale);
  j["latent_dim"] = spec.latent_dim;
  j["hidden"] = spec.hidden;
  j["squash"] = spec.squash;
  j["horizon"] = spec.horizon;
  if (spec.kind == PolicyKind::ddr) j["layer_sizes"] = spec.layer_sizes();
  j["theta"] = to_json(checkpoint.params.theta);
  j["seed"] = checkpoint.seed;
  j["config_hash"] = hex(checkpoint.config_hash);
  j["case_hash"] = hex(checkpoint.case_hash);
  return j.dump(1);
}

Checkpoint parse_checkpoint(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != "tsgdr-checkpoint")
      throw ParseError("checkpoint: not a policy checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw ParseError("checkpoint: unsupported version " + j.at("version").dump());
    auto& spec = c.params.spec;
    spec.kind = parse_policy_kind(j.at("kind").get<std::string>());
    spec.n_hydros = j.at("n_hydros").get<std::size_t>();
    spec.v_min = from_json(j.at("v_min"));
    spec.v_max = from_json(j.at("v_max"));
    spec.inflow_scale = from_json(j.at("inflow_scale"));
    spec.latent_dim = j.at("latent_dim").get<int>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.squash = j.at("squash").get<bool>();
    spec.horizon = j.at("horizon").get<int>();
    c.params.theta = from_json(j.at("theta"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_hash = parse_hex(j.at("config_hash").get<std::string>());
    c.case_hash = parse_hex(j.at("case_hash").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  c.params.spec.check();
  if (c.params.theta.size() != static_cast<Index>(c.params.spec.n_parameters()))
    throw DimensionError("checkpoint: theta has " + std::to_string(c.params.theta.size()) +
                         " entries, expected " + std::to_string(c.params.spec.n_parameters()));
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_checkpoint(checkpoint) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace tsgdr::policy
