#include "moncap/config.hpp"

#include <fstream>
#include <set>

#include "moncap/properties.hpp"

namespace moncap {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!keys.count(key)) throw ConfigError(path + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, const std::string& path, T& out) {
  if (j.contains(key)) out = get<T>(j, key, path);
}

Flux parse_flux(const json& j, const std::string& path) {
  try {
    return Flux::from_json(j);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ShapeExpr parse_shape(const json& j, const std::string& path, double L) {
  try {
    ShapeExpr s = ShapeExpr::from_json(j);
    s.validate(L);
    return s;
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SuiteBlock parse_suite(const json& j, double L) {
  require_object(j, "suite",
                 {"name", "instances", "fluxes", "inits", "identity_instances", "sweep_instances", "chain", "mode"});
  SuiteBlock b;
  b.name = get<std::string>(j, "name", "suite");
  maybe(j, "instances", "suite", b.instances);
  maybe(j, "inits", "suite", b.inits);
  maybe(j, "identity_instances", "suite", b.identity_instances);
  maybe(j, "sweep_instances", "suite", b.sweep_instances);
  maybe(j, "mode", "suite", b.mode);
  if (j.contains("fluxes")) {
    const auto& f = j["fluxes"];
    if (f.is_string() && f.get<std::string>() == "family") {
      b.fluxes = default_flux_family();
    } else if (f.is_array()) {
      for (std::size_t i = 0; i < f.size(); ++i) b.fluxes.push_back(parse_flux(f[i], "suite.fluxes[" + std::to_string(i) + "]"));
    } else {
      throw ConfigError("suite.fluxes: expected \"family\" or an array of flux specs");
    }
  }
  if (j.contains("chain")) {
    if (!j["chain"].is_array()) throw ConfigError("suite.chain: expected an array of shapes");
    for (std::size_t i = 0; i < j["chain"].size(); ++i)
      b.chain.push_back(parse_shape(j["chain"][i], "suite.chain[" + std::to_string(i) + "]", L));
  }
  return b;
}

OracleBlock parse_oracle(const json& j) {
  require_object(j, "oracle", {"value", "radial", "radial_numeric", "strip"});
  if (j.size() != 1) throw ConfigError("oracle: expected exactly one of value, radial, radial_numeric, strip");
  OracleBlock o;
  if (j.contains("value")) {
    o.kind = OracleBlock::Kind::value;
    o.value = get<double>(j, "value", "oracle");
  } else if (j.contains("strip")) {
    o.kind = OracleBlock::Kind::strip;
    const auto& s = j["strip"];
    require_object(s, "oracle.strip", {"a", "b", "height"});
    maybe(s, "a", "oracle.strip", o.strip_a);
    maybe(s, "b", "oracle.strip", o.strip_b);
    maybe(s, "height", "oracle.strip", o.strip_height);
  } else {
    const bool numeric = j.contains("radial_numeric");
    o.kind = numeric ? OracleBlock::Kind::radial_numeric : OracleBlock::Kind::radial;
    const std::string path = numeric ? "oracle.radial_numeric" : "oracle.radial";
    const auto& r = numeric ? j["radial_numeric"] : j["radial"];
    if (numeric)
      require_object(r, path, {"n", "r", "R", "M"});
    else
      require_object(r, path, {"n", "p", "r", "R"});
    maybe(r, "n", path, o.radial.n);
    maybe(r, "p", path, o.radial.p);
    maybe(r, "r", path, o.radial.r);
    maybe(r, "R", path, o.radial.R);
    maybe(r, "M", path, o.simpson_intervals);
    try {
      o.radial.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  return o;
}

}  // namespace

double OracleBlock::evaluate(const Flux& flux) const {
  switch (kind) {
    case Kind::value:
      return value;
    case Kind::strip:
      return strip_capacity(flux.p(), strip_a, strip_b, strip_height);
    case Kind::radial: {
      return radial_p_capacity(radial);
    }
    case Kind::radial_numeric: {
      RadialSpec spec = radial;
      spec.p = flux.p();
      return radial_numeric(spec, flux, simpson_intervals);
    }
  }
  return value;
}

json OracleBlock::to_json() const {
  switch (kind) {
    case Kind::value:
      return {{"value", value}};
    case Kind::strip:
      return {{"strip", {{"a", strip_a}, {"b", strip_b}, {"height", strip_height}}}};
    case Kind::radial:
      return {{"radial", {{"n", radial.n}, {"p", radial.p}, {"r", radial.r}, {"R", radial.R}}}};
    case Kind::radial_numeric:
      return {{"radial_numeric", {{"n", radial.n}, {"r", radial.r}, {"R", radial.R}, {"M", simpson_intervals}}}};
  }
  return nullptr;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require_object(j, "config",
                 {"mesh", "flux", "E", "F", "s", "solver", "clip_E_to_F", "suite", "s_grid", "N_list", "oracle",
                  "converge", "check_flux", "output", "seed"});
  ExperimentConfig c;
  c.source = j;
  if (j.contains("mesh")) {
    require_object(j["mesh"], "mesh", {"N", "L"});
    maybe(j["mesh"], "N", "mesh", c.N);
    maybe(j["mesh"], "L", "mesh", c.L);
    if (c.N < 2) throw ConfigError("mesh.N: must be >= 2");
    if (!(c.L > 0.0)) throw ConfigError("mesh.L: must be > 0");
  }
  if (j.contains("flux")) c.flux = parse_flux(j["flux"], "flux");
  if (j.contains("E")) c.E = parse_shape(j["E"], "E", c.L);
  if (j.contains("F")) c.F = parse_shape(j["F"], "F", c.L);
  maybe(j, "s", "config", c.s);
  if (j.contains("solver")) {
    try {
      c.solver = SolverOptions::from_json(j["solver"]);
      c.solver.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("solver: ") + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("solver: ") + e.what());
    }
  }
  maybe(j, "clip_E_to_F", "config", c.clip_E_to_F);
  if (j.contains("suite")) c.suite = parse_suite(j["suite"], c.L);
  maybe(j, "s_grid", "config", c.s_grid);
  maybe(j, "N_list", "config", c.N_list);
  if (j.contains("oracle")) c.oracle = parse_oracle(j["oracle"]);
  if (j.contains("converge")) {
    const auto& b = j["converge"];
    require_object(b, "converge", {"rel_tol", "allowed_increases", "compare_flux"});
    maybe(b, "rel_tol", "converge", c.converge.rel_tol);
    maybe(b, "allowed_increases", "converge", c.converge.allowed_increases);
    if (b.contains("compare_flux")) c.converge.compare_flux = parse_flux(b["compare_flux"], "converge.compare_flux");
  }
  if (j.contains("check_flux")) {
    const auto& b = j["check_flux"];
    require_object(b, "check_flux", {"samples", "radius"});
    maybe(b, "samples", "check_flux", c.check_flux.samples);
    maybe(b, "radius", "check_flux", c.check_flux.radius);
  }
  maybe(j, "output", "config", c.output);
  maybe(j, "seed", "config", c.seed);
  if (!std::isfinite(c.s)) throw ConfigError("s: must be finite");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace moncap
