// Command-line entry point: capacity solves, field dumps, s-sweeps, property
// suites, refinement studies, flux checks and oracle values.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moncap/capacity.hpp"
#include "moncap/config.hpp"
#include "moncap/io.hpp"
#include "moncap/oracle.hpp"
#include "moncap/properties.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moncap;

namespace {

constexpr int kExitSuiteFailed = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitDiverged = 3;

struct Globals {
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> tol_res;
  bool quiet = false;
};

/// Result of one command: exit code, the key results for the ledger, and the hash.
struct RunResult {
  int code = 0;
  json key = json::object();
  std::string hash;
};

fs::path output_dir(const Globals& g, const ExperimentConfig* cfg) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("MONCAP_OUT"); env && *env) return env;
  if (cfg && !cfg->output.empty()) return cfg->output;
  return "moncap_out";
}

ExperimentConfig load_config(const std::string& path, const Globals& g) {
  ExperimentConfig cfg = ExperimentConfig::load(path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.tol_res) {
    if (!(*g.tol_res > 0.0)) throw ConfigError("--tol-res: must be > 0");
    cfg.solver.tol_res = *g.tol_res;
  }
  if (g.jobs > 1) {
    cfg.solver.assembly.parallel = true;
    cfg.solver.assembly.workers = g.jobs;
  }
  return cfg;
}

std::string effective_hash(const ExperimentConfig& cfg, const Globals& g, const json& extra = json::object()) {
  json j{{"config", cfg.source}, {"seed", cfg.seed}, {"extra", extra}};
  if (g.tol_res) j["tol_res"] = *g.tol_res;
  return config_hash(j);
}

void print(const Globals& g, const json& j) {
  if (!g.quiet) std::cout << j.dump(2) << '\n';
}

struct Pair {
  Mesh mesh;
  NodeSet E;
  NodeSet F;
};

Pair build_pair(const ExperimentConfig& cfg) {
  if (!cfg.E || !cfg.F) throw ConfigError("config: E and F shapes are required for this command");
  Mesh mesh(cfg.N, cfg.L);
  NodeSet e = rasterize(*cfg.E, mesh, "E");
  NodeSet f = rasterize(*cfg.F, mesh, "F");
  return {std::move(mesh), std::move(e), std::move(f)};
}

// ---------------------------------------------------------------------------

RunResult cmd_capacity(const std::string& path, const Globals& g) {
  const auto cfg = load_config(path, g);
  const auto pr = build_pair(cfg);
  RunResult r;
  r.hash = effective_hash(cfg, g);
  const fs::path out = output_dir(g, &cfg);
  CapacityOptions copts;
  copts.clip_e_to_f = cfg.clip_E_to_F;
  json report;
  try {
    report = compute_capacity(pr.mesh, cfg.flux, pr.E, pr.F, cfg.s, cfg.solver, copts).report.to_json();
  } catch (const CapacityDiverged& e) {
    report = e.partial().to_json();
    r.code = kExitDiverged;
  }
  report["config_hash"] = r.hash;
  write_atomic(out / "capacity.json", dump_report(report));
  print(g, report);
  r.key = {{"capacity", report["capacity"]}, {"converged", report["converged"]}};
  return r;
}

RunResult cmd_potential(const std::string& path, const Globals& g, bool csv, bool pgm) {
  const auto cfg = load_config(path, g);
  const auto pr = build_pair(cfg);
  RunResult r;
  r.hash = effective_hash(cfg, g);
  const fs::path out = output_dir(g, &cfg);
  const ValidatedPair vp = validate_pair(pr.mesh, pr.E, pr.F, cfg.clip_E_to_F);
  PotentialField field;
  try {
    field = solve_dirichlet(pr.mesh, cfg.flux, vp.E, vp.F, cfg.s, cfg.solver);
  } catch (const SolverDiverged& e) {
    field = e.best();
    r.code = kExitDiverged;
  }
  if (csv) write_atomic(out / "potential.csv", field_csv(pr.mesh, field.u));
  if (pgm) {
    const double lo = std::min(0.0, cfg.s), hi = std::max(0.0, cfg.s);
    write_atomic(out / "potential.pgm", field_pgm(pr.mesh, field.u, lo, hi));
    write_atomic(out / "E.pgm", mask_pgm(pr.mesh, vp.E));
    write_atomic(out / "F.pgm", mask_pgm(pr.mesh, vp.F));
  }
  write_atomic(out / "residual_history.csv", history_csv(field.history));
  const json summary{{"config_hash", r.hash},       {"converged", field.converged},
                     {"iterations", field.iterations}, {"residual_max", field.residual_max},
                     {"tol_res", field.tol_res},     {"direct_fallbacks", field.direct_fallbacks},
                     {"nodes", pr.mesh.num_nodes()}};
  print(g, summary);
  r.key = {{"converged", field.converged}, {"iterations", field.iterations}};
  return r;
}

std::vector<double> default_s_grid() {
  std::vector<double> s;
  for (int k = -8; k <= 8; ++k) s.push_back(0.5 * k);
  return s;
}

RunResult cmd_sweep(const std::string& path, const Globals& g) {
  const auto cfg = load_config(path, g);
  const auto pr = build_pair(cfg);
  RunResult r;
  r.hash = effective_hash(cfg, g);
  const fs::path out = output_dir(g, &cfg);
  const auto grid = cfg.s_grid.empty() ? default_s_grid() : cfg.s_grid;
  const ValidatedPair vp = validate_pair(pr.mesh, pr.E, pr.F, cfg.clip_E_to_F);
  const auto reports = sweep_s(pr.mesh, cfg.flux, vp.E, vp.F, grid, cfg.solver);
  json arr = json::array();
  bool all_converged = true;
  for (const auto& rep : reports) {
    arr.push_back(rep.to_json());
    all_converged = all_converged && rep.converged;
  }
  const json doc{{"config_hash", r.hash}, {"flux", cfg.flux.describe()}, {"points", arr}};
  write_atomic(out / "sweep.json", dump_report(doc));
  write_atomic(out / "sweep.csv", sweep_csv(reports));
  print(g, doc);
  if (!all_converged) r.code = kExitDiverged;
  r.key = {{"points", reports.size()}, {"all_converged", all_converged}};
  return r;
}

ChainMode parse_mode(const std::string& m) {
  if (m == "increasing_E") return ChainMode::increasing_e;
  if (m == "decreasing_E") return ChainMode::decreasing_e;
  if (m == "increasing_F") return ChainMode::increasing_f;
  if (m == "decreasing_F") return ChainMode::decreasing_f;
  throw ConfigError("suite.mode: expected increasing_E, decreasing_E, increasing_F or decreasing_F");
}

RunResult cmd_suite(const std::string& path, const Globals& g, const std::string& name_flag) {
  const auto cfg = load_config(path, g);
  SuiteBlock block = cfg.suite.value_or(SuiteBlock{});
  if (!name_flag.empty()) block.name = name_flag;
  if (block.name.empty()) throw ConfigError("suite.name: required (or pass --name)");
  const auto fluxes = block.fluxes.empty() ? default_flux_family() : block.fluxes;

  SuiteOptions opts;
  opts.solver = cfg.solver;
  opts.jobs = std::max(1u, g.jobs);
  const Mesh mesh(cfg.N, cfg.L);
  SuiteReport rep;
  if (block.name == "order") {
    rep = run_order_suite(mesh, fluxes, block.instances, cfg.seed, opts);
  } else if (block.name == "subadditivity") {
    rep = run_subadditivity_suite(mesh, fluxes, block.instances, cfg.seed, opts);
  } else if (block.name == "bounds") {
    rep = run_bounds_suite(mesh, fluxes, block.instances, cfg.seed, opts);
  } else if (block.name == "s") {
    SSuiteOptions s;
    s.s_grid = cfg.s_grid.empty() ? default_s_grid() : cfg.s_grid;
    s.identity_instances = block.identity_instances;
    s.sweep_instances = block.sweep_instances;
    rep = run_s_suite(mesh, fluxes, s, cfg.seed, opts);
  } else if (block.name == "invariance") {
    const Flux flux = block.fluxes.empty() ? default_flat_core() : block.fluxes.front();
    rep = run_invariance_suite(mesh, flux, block.instances, cfg.seed, opts, block.inits);
  } else if (block.name == "comparison") {
    const Flux flux = block.fluxes.empty() ? cfg.flux : block.fluxes.front();
    rep = run_comparison_suite(mesh, flux, block.instances, cfg.seed, opts);
  } else if (block.name == "sequence") {
    const ChainMode mode = parse_mode(block.mode);
    const bool e_mode = mode == ChainMode::increasing_e || mode == ChainMode::decreasing_e;
    const auto& fixed_shape = e_mode ? cfg.F : cfg.E;
    if (!fixed_shape) throw ConfigError(e_mode ? "F: required for an E-chain" : "E: required for an F-chain");
    if (block.chain.empty()) throw ConfigError("suite.chain: required for the sequence demo");
    std::vector<NodeSet> chain;
    for (std::size_t k = 0; k < block.chain.size(); ++k)
      chain.push_back(rasterize(block.chain[k], mesh, "chain" + std::to_string(k)));
    const NodeSet fixed = rasterize(*fixed_shape, mesh, e_mode ? "F" : "E");
    const Flux flux = block.fluxes.empty() ? cfg.flux : block.fluxes.front();
    rep = run_sequence_demo(mesh, flux, chain, fixed, mode, opts);
  } else {
    throw ConfigError("suite.name: unknown suite '" + block.name + "'");
  }

  RunResult r;
  r.hash = effective_hash(cfg, g, {{"suite", block.name}});
  json doc = rep.to_json();
  doc["config_hash"] = r.hash;
  doc["seed"] = cfg.seed;
  doc["N"] = cfg.N;
  const fs::path out = output_dir(g, &cfg);
  write_atomic(out / ("suite_" + block.name + ".json"), dump_report(doc));
  std::cout << rep.summary() << '\n';
  r.code = rep.passed() ? 0 : kExitSuiteFailed;
  r.key = {{"suite", block.name},
           {"passed", rep.passed()},
           {"instances", rep.instances},
           {"violations", rep.violations},
           {"worst_margin", rep.worst_margin}};
  return r;
}

RunResult cmd_converge(const std::string& path, const Globals& g) {
  const auto cfg = load_config(path, g);
  if (!cfg.E || !cfg.F) throw ConfigError("config: E and F shapes are required for converge");
  if (cfg.N_list.empty()) throw ConfigError("N_list: required for converge");
  const Geometry geo{"config", *cfg.E, *cfg.F};
  SuiteOptions opts;
  opts.solver = cfg.solver;
  opts.jobs = std::max(1u, g.jobs);
  json doc = json::object();
  bool passed = true;
  if (cfg.oracle) {
    ConvergenceOptions copts;
    copts.rel_tol = cfg.converge.rel_tol;
    copts.allowed_increases = cfg.converge.allowed_increases;
    copts.side = cfg.L;
    const double oracle = cfg.oracle->evaluate(cfg.flux);
    const auto rep = run_convergence_study(geo, cfg.flux, cfg.N_list, oracle, copts, opts);
    doc["convergence"] = rep.to_json();
    doc["oracle"] = cfg.oracle->to_json();
    doc["oracle_value"] = oracle;
    std::cout << rep.summary() << '\n';
    passed = passed && rep.passed();
  }
  if (cfg.converge.compare_flux) {
    const auto rep = run_flux_gap_study(geo, cfg.flux, *cfg.converge.compare_flux, cfg.N_list, opts);
    doc["flux_gap"] = rep.to_json();
    std::cout << rep.summary() << '\n';
    passed = passed && rep.passed();
  }
  if (doc.empty()) throw ConfigError("converge: needs an oracle block or converge.compare_flux");
  RunResult r;
  r.hash = effective_hash(cfg, g);
  doc["config_hash"] = r.hash;
  write_atomic(output_dir(g, &cfg) / "converge.json", dump_report(doc));
  r.code = passed ? 0 : kExitSuiteFailed;
  r.key = {{"passed", passed}};
  return r;
}

RunResult cmd_check_flux(const std::string& path, const Globals& g) {
  const auto cfg = load_config(path, g);
  const auto rep = check_conditions(cfg.flux, cfg.check_flux.samples, cfg.check_flux.radius, cfg.seed, cfg.L);
  RunResult r;
  r.hash = effective_hash(cfg, g);
  json doc = rep.to_json();
  doc["flux"] = cfg.flux.describe();
  doc["config_hash"] = r.hash;
  write_atomic(output_dir(g, &cfg) / "check_flux.json", dump_report(doc));
  print(g, doc);
  r.code = rep.all_passed() ? 0 : kExitSuiteFailed;
  r.key = {{"all_passed", rep.all_passed()}};
  return r;
}

struct OracleArgs {
  std::string kind = "radial";
  int n = 2;
  double p = 2.0;
  double r = 0.1;
  double R = 0.4;
  double a = 0.25;
  double b = 0.75;
  double height = 1.0;
  int M = 2000;
  std::string flux;
};

RunResult cmd_oracle(const OracleArgs& a, const Globals& g) {
  json doc;
  if (a.kind == "radial") {
    const RadialSpec spec{a.n, a.p, a.r, a.R};
    doc = {{"kind", "radial"}, {"n", a.n}, {"p", a.p}, {"r", a.r}, {"R", a.R}, {"value", radial_p_capacity(spec)}};
  } else if (a.kind == "strip") {
    doc = {{"kind", "strip"}, {"p", a.p}, {"a", a.a}, {"b", a.b}, {"height", a.height},
           {"value", strip_capacity(a.p, a.a, a.b, a.height)}};
  } else if (a.kind == "radial-numeric") {
    Flux flux = Flux::p_laplacian(a.p);
    if (!a.flux.empty()) {
      try {
        flux = Flux::from_json(json::parse(a.flux));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("--flux: ") + e.what());
      }
    }
    const RadialSpec spec{a.n, flux.p(), a.r, a.R};
    doc = {{"kind", "radial-numeric"}, {"n", a.n}, {"r", a.r}, {"R", a.R}, {"M", a.M},
           {"flux", flux.to_json()}, {"value", radial_numeric(spec, flux, a.M)}};
  } else {
    throw ConfigError("--kind: expected radial, strip or radial-numeric");
  }
  RunResult r;
  r.hash = config_hash(doc);
  print(g, doc);
  r.key = {{"value", doc["value"]}};
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear capacity engine for monotone fluxes on a uniform P1 mesh"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--jobs", g.jobs, "Worker threads for suites and assembly")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory (overrides MONCAP_OUT and the config)");
  app.add_option("--tol-res", g.tol_res, "Override the free-node residual target");
  app.add_flag("--quiet", g.quiet, "Suppress JSON on standard output");

  std::string config;
  auto* capacity = app.add_subcommand("capacity", "Solve one capacity problem");
  capacity->add_option("config", config)->required()->check(CLI::ExistingFile);
  bool csv = false, pgm = false;
  auto* potential = app.add_subcommand("potential", "Solve and dump the potential field");
  potential->add_option("config", config)->required()->check(CLI::ExistingFile);
  potential->add_flag("--csv", csv, "Write potential.csv");
  potential->add_flag("--pgm", pgm, "Write potential.pgm and the E/F masks");
  auto* sweep = app.add_subcommand("sweep-s", "Capacity over the config s_grid");
  sweep->add_option("config", config)->required()->check(CLI::ExistingFile);
  std::string suite_name;
  auto* suite = app.add_subcommand("suite", "Run a property suite");
  suite->add_option("config", config)->required()->check(CLI::ExistingFile);
  suite->add_option("--name", suite_name,
                    "order, subadditivity, bounds, s, invariance, comparison or sequence");
  auto* converge = app.add_subcommand("converge", "Refinement study against an oracle or a second flux");
  converge->add_option("config", config)->required()->check(CLI::ExistingFile);
  auto* check = app.add_subcommand("check-flux", "Randomized check of the structural flux conditions");
  check->add_option("config", config)->required()->check(CLI::ExistingFile);
  OracleArgs oa;
  auto* oracle = app.add_subcommand("oracle", "Print a reference capacity");
  oracle->add_option("--kind", oa.kind, "radial, strip or radial-numeric");
  oracle->add_option("--n", oa.n, "Dimension");
  oracle->add_option("--p", oa.p, "Exponent");
  oracle->add_option("--r", oa.r, "Inner radius");
  oracle->add_option("--R", oa.R, "Outer radius");
  oracle->add_option("--a", oa.a, "Strip start");
  oracle->add_option("--b", oa.b, "Strip end");
  oracle->add_option("--height", oa.height, "Strip height");
  oracle->add_option("--M", oa.M, "Simpson intervals");
  oracle->add_option("--flux", oa.flux, "Flux spec as JSON (radial-numeric)");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadConfig;
  }
  auto* active = app.get_subcommands().front();
  const std::string command = active->get_name();

  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  std::string error;
  try {
    if (command == "capacity")
      result = cmd_capacity(config, g);
    else if (command == "potential")
      result = cmd_potential(config, g, csv, pgm);
    else if (command == "sweep-s")
      result = cmd_sweep(config, g);
    else if (command == "suite")
      result = cmd_suite(config, g, suite_name);
    else if (command == "converge")
      result = cmd_converge(config, g);
    else if (command == "check-flux")
      result = cmd_check_flux(config, g);
    else
      result = cmd_oracle(oa, g);
  } catch (const InvalidInput& e) {
    error = e.what();
    result.code = kExitBadConfig;
  } catch (const IncompatiblePair& e) {
    error = e.what();
    result.code = kExitBadConfig;
  } catch (const SolverDiverged& e) {
    error = e.what();
    result.code = kExitDiverged;
  } catch (const std::exception& e) {
    error = e.what();
    result.code = kExitBadConfig;
  }
  if (!error.empty()) std::cerr << "moncap " << command << ": " << error << '\n';
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json line{{"command", command}, {"config_hash", result.hash}, {"exit_code", result.code},
            {"results", result.key}, {"wall_time_s", wall}};
  if (!config.empty()) line["config"] = config;
  if (!error.empty()) line["error"] = error;
  try {
    std::optional<ExperimentConfig> cfg;
    if (!config.empty() && result.code != kExitBadConfig) cfg = ExperimentConfig::load(config);
    append_jsonl(output_dir(g, cfg ? &*cfg : nullptr) / "ledger.jsonl", line);
  } catch (const std::exception& e) {
    std::cerr << "moncap: ledger append failed: " << e.what() << '\n';
  }
  return result.code;
}
