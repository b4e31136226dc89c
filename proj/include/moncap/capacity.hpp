#ifndef MONCAP_CAPACITY_HPP
#define MONCAP_CAPACITY_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moncap/flux.hpp"
#include "moncap/mesh.hpp"
#include "moncap/solver.hpp"

namespace moncap {

/// Discrete measure carried by a node set.
struct NodeMeasure {
  std::vector<double> weights;
  double total = 0.0;
  std::string carrier;

  double min_weight() const;
};

/// Constants of the sandwich bounds between C_A and C_p.
struct SandwichConstants {
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
};

/// k1 = (4 c2)^p / (p (q c1)^{p-1}),
/// k2 = 4 c2 / c1^{1/q} (b1 |F|)^{1/q} + 4 b2 |F|^{1/q},
/// k3 = 2^{p+1} (c2 / c1^{1/q} b1^{1/q} + b2) diam(F)^{p-1}.
SandwichConstants sandwich_constants(const FluxConstants& c, double p, double area_f, double diam_f);

/// Measure of the support of W_0(F) functions: triangles touching a node of F.
double discrete_area(const Mesh& mesh, const NodeSet& f);
/// Euclidean diameter of the node set.
double node_diameter(const Mesh& mesh, const NodeSet& f);

struct CapacityReport {
  bool compatible = true;
  bool converged = false;
  double s = 1.0;
  double c_energy = 0.0;  // sum_T |T| a(grad u).grad u
  double c_inner = 0.0;   // s sum_{E} r_i
  double c_outer = 0.0;   // -s sum_{F^c} r_i
  double c_hat = 0.0;     // sum_{E} r_i  (0 for s = 0)
  std::optional<double> cp_value;
  double p = 2.0;
  FluxConstants constants;
  SandwichConstants k;
  double area_f = 0.0;
  double diam_f = 0.0;
  double residual_max = 0.0;
  double tol_res = 0.0;
  double tol_cap = 0.0;  // constrained nodes * tol_res * max(1, |s|)
  int iterations = 0;
  std::size_t free_nodes = 0;
  std::size_t constrained_nodes = 0;
  std::string error;

  /// Primary reported value C_A(E, F, s) (the inner residual sum).
  double capacity() const { return c_inner; }
  bool infinite() const { return !compatible; }
  nlohmann::json to_json() const;
};

struct CapacityOptions {
  bool clip_e_to_f = false;
  /// Also solve the same-grid p-Laplacian problem and fill cp_value.
  bool with_cp = false;
};

struct CapacityResult {
  CapacityReport report;
  std::optional<PotentialField> potential;
};

/// Solver failure raised from compute_capacity; carries the partial report.
class CapacityDiverged : public SolverDiverged {
 public:
  CapacityDiverged(const SolverDiverged& cause, CapacityReport partial)
      : SolverDiverged(cause.what(), cause.best()), partial_(std::move(partial)) {}
  const CapacityReport& partial() const { return partial_; }

 private:
  CapacityReport partial_;
};

/// Solves for the potential and evaluates the three capacity formulas.
/// E not inside F yields an infinite report without solving.
CapacityResult compute_capacity(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                                double s, const SolverOptions& opts = {}, const CapacityOptions& copts = {});

/// Evaluates the capacity formulas for an already solved potential.
CapacityReport evaluate_capacity(const Mesh& mesh, const Flux& flux, const PotentialField& potential,
                                 const NodeSet& e, const NodeSet& f);

/// Capacitary distributions (lambda, nu) with A u = lambda - nu. For s > 0,
/// lambda = r on E and nu = -r on F^c; for s < 0 the carriers swap; s = 0
/// gives zero measures.
std::pair<NodeMeasure, NodeMeasure> distributions(const Mesh& mesh, const Flux& flux,
                                                  const PotentialField& potential, const NodeSet& e,
                                                  const NodeSet& f);

/// One report per s (ascending), warm-starting along the sweep. Failed points
/// are marked (converged = false, error set) and the sweep continues.
std::vector<CapacityReport> sweep_s(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                                    const std::vector<double>& s_values, const SolverOptions& opts = {});

/// Discrete C_p(E, F): compute_capacity with the pure p-Laplacian and s = 1.
double p_capacity(const Mesh& mesh, double p, const NodeSet& e, const NodeSet& f,
                  const SolverOptions& opts = {});

/// Signed margins of the sandwich bounds (>= -slack means satisfied), using
/// the report's s, cp_value and constants. Requires cp_value.
struct BoundMargins {
  double lower = 0.0;         // C_A - (|s|^p c1 C_p - b1 |F|)
  double upper = 0.0;         // |s|^p k1 C_p + |s| k2 C_p^{1/p} - C_A
  double upper_linear = 0.0;  // (|s|^p k1 + |s| k3) C_p - C_A
  double slack = 0.0;         // 1e-9 (1 + C_p)

  bool holds() const { return lower >= -slack && upper >= -slack && upper_linear >= -slack; }
};

BoundMargins sandwich_margins(const CapacityReport& report);

}  // namespace moncap

#endif  // MONCAP_CAPACITY_HPP
