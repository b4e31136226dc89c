#ifndef MONCAP_PROPERTIES_HPP
#define MONCAP_PROPERTIES_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moncap/capacity.hpp"
#include "moncap/flux.hpp"
#include "moncap/mesh.hpp"
#include "moncap/solver.hpp"

namespace moncap {

/// Structural checks applied to every capacity solve a suite performs.
struct SolveAudit {
  std::size_t solves = 0;
  std::size_t converged = 0;
  std::size_t failed = 0;
  // |c_energy - c_inner|, |c_inner - c_outer| <= tol_cap
  std::size_t formula_violations = 0;
  double worst_formula_ratio = 0.0;  // max gap / tol_cap
  // lambda vanishes off discrete_boundary(E) (within tol_res)
  std::size_t support_violations = 0;
  // min(lambda), min(nu) >= -1e-8 (1 + |C_hat|)
  std::size_t sign_violations = 0;
  double worst_lambda_scaled = 0.0;  // min lambda / (1 + |C_hat|)
  double worst_nu_scaled = 0.0;
  // sandwich bounds with slack 1e-9 (1 + C_p)
  std::size_t bounds_checked = 0;
  std::size_t bounds_violations = 0;
  double worst_bound_scaled = std::numeric_limits<double>::infinity();  // min margin / (1 + C_p)
  // p-Laplacian at s = 1: |C_A - C_p| <= 1e-10 (1 + C_p)
  std::size_t tight_checked = 0;
  std::size_t tight_violations = 0;

  void merge(const SolveAudit& other);
  bool clean() const {
    return formula_violations == 0 && support_violations == 0 && sign_violations == 0 &&
           bounds_violations == 0 && tight_violations == 0;
  }
  nlohmann::json to_json() const;
};

struct InstanceRecord {
  std::size_t index = 0;
  std::string config_hash;
  std::string flux;
  nlohmann::json values = nlohmann::json::object();
  double margin = 0.0;  // normalized signed margin; >= -tolerance passes
  bool skipped = false;
  std::string note;
};

struct SuiteReport {
  std::string suite;
  double tolerance = 0.0;
  std::string tolerance_rule;
  std::size_t instances = 0;
  std::size_t violations = 0;
  std::size_t skipped = 0;
  double worst_margin = 0.0;
  std::vector<InstanceRecord> records;
  SolveAudit audit;
  /// Suite-specific checks (refinement trends, continuity ratios, ...).
  nlohmann::json extra = nlohmann::json::object();
  bool extra_passed = true;

  /// Skipped instances may not exceed 2% of the total.
  bool skip_budget_ok() const { return skipped * 50 <= instances; }
  bool passed() const { return violations == 0 && skip_budget_ok() && extra_passed && audit.clean(); }
  /// Finalizes counters from the records.
  void tally();
  nlohmann::json to_json() const;
  std::string summary() const;
};

struct SuiteOptions {
  SolverOptions solver;
  unsigned jobs = 1;
  /// Solve C_p alongside every capacity and check the sandwich bounds.
  bool audit_bounds = true;
};

/// Fluxes exercised by the suites: p-Laplacian (p = 1.5, 2, 3), weighted,
/// anisotropic, skew linear and flat-core.
std::vector<Flux> default_flux_family();
/// Flat-core flux used by the invariance suite.
Flux default_flat_core();

/// Monotonicity in E (E1 in E2) and in F (F1 in F2).
SuiteReport run_order_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, std::size_t n_instances,
                            std::uint64_t seed, const SuiteOptions& opts = {});

/// Subadditivity over pairs and finite covers by triples, with a refinement
/// re-run of the five worst instances on the doubled grid.
SuiteReport run_subadditivity_suite(const Mesh& mesh, const std::vector<Flux>& fluxes,
                                    std::size_t n_instances, std::uint64_t seed, const SuiteOptions& opts = {});

/// Lower and upper sandwich bounds against same-grid C_p, for s = 1 and a random s.
SuiteReport run_bounds_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, std::size_t n_instances,
                             std::uint64_t seed, const SuiteOptions& opts = {});

struct SSuiteOptions {
  /// Ascending grid straddling 0; the continuity proxy compares it with its midpoint refinement.
  std::vector<double> s_grid;
  /// s values checked against the transformed flux a_s.
  std::vector<double> identity_s = {-2.0, -0.5, 0.5, 3.0};
  std::size_t identity_instances = 20;
  /// Geometries swept over both grids for every flux.
  std::size_t sweep_instances = 2;
  double continuity_ratio = 1.5;
};

/// Monotonicity and continuity of C_hat(s), the scaling identity and the |s|^p law.
SuiteReport run_s_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, const SSuiteOptions& sopts,
                        std::uint64_t seed, const SuiteOptions& opts = {});

/// Capacity does not depend on which potential the solver returns (flat-core flux).
/// Every instance is repeated with the p = 2 Laplacian as a strictly monotone control.
SuiteReport run_invariance_suite(const Mesh& mesh, std::size_t n_instances, std::uint64_t seed,
                                 const SuiteOptions& opts = {}, std::size_t inits = 5);
SuiteReport run_invariance_suite(const Mesh& mesh, const Flux& flux, std::size_t n_instances,
                                 std::uint64_t seed, const SuiteOptions& opts = {}, std::size_t inits = 5);

/// Pointwise ordering of potentials for nested E and nested F, and the range bound.
SuiteReport run_comparison_suite(const Mesh& mesh, const Flux& flux, std::size_t n_instances,
                                 std::uint64_t seed, const SuiteOptions& opts = {});

enum class ChainMode { increasing_e, decreasing_e, increasing_f, decreasing_f };

/// Capacities along a finite monotone chain of E (with F fixed) or F (with E fixed).
SuiteReport run_sequence_demo(const Mesh& mesh, const Flux& flux, const std::vector<NodeSet>& chain,
                              const NodeSet& fixed, ChainMode mode, const SuiteOptions& opts = {});

struct Geometry {
  std::string name;
  ShapeExpr e;
  ShapeExpr f;
};

struct ConvergenceOptions {
  double rel_tol = 0.05;           // error at the largest N
  std::size_t allowed_increases = 1;
  double side = 1.0;
};

/// Table of (N, C_A, relative error) against an oracle value.
SuiteReport run_convergence_study(const Geometry& geometry, const Flux& flux, const std::vector<int>& n_list,
                                  double oracle_value, const ConvergenceOptions& copts = {},
                                  const SuiteOptions& opts = {});

/// |C_A(flux_a) - C_A(flux_b)| over refinements; must not increase beyond round-off.
SuiteReport run_flux_gap_study(const Geometry& geometry, const Flux& flux_a, const Flux& flux_b,
                               const std::vector<int>& n_list, const SuiteOptions& opts = {});

}  // namespace moncap

#endif  // MONCAP_PROPERTIES_HPP
