#ifndef MONCAP_SOLVER_HPP
#define MONCAP_SOLVER_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moncap/assembly.hpp"
#include "moncap/flux.hpp"
#include "moncap/mesh.hpp"

namespace moncap {

enum class InitKind { zero, linear_blend, given, random };

struct InitSpec {
  InitKind kind = InitKind::linear_blend;
  std::vector<double> field;  // used by InitKind::given
  std::uint64_t seed = 0;     // used by InitKind::random
};

struct SolverOptions {
  /// Free-node residual max-norm target; default 1e-10 max(1, |s|^{p-1}).
  std::optional<double> tol_res;
  int max_newton = 200;
  std::vector<double> eps_schedule = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10};
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;
  double min_step = 1e-8;
  double inner_tol = 1e-10;
  InitSpec init;
  bool picard_fallback = true;
  /// Extra Newton steps taken after tol_res is met, kept only if they lower the residual.
  int extra_polish_steps = 1;
  AssemblyOptions assembly;

  double resolved_tol(double p, double s) const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Parses the "solver" config block; unknown keys are rejected.
  static SolverOptions from_json(const nlohmann::json& j);
};

struct ResidualRecord {
  int iteration = 0;
  double eps = 0.0;      // 0 for the true flux
  double residual = 0.0; // max-norm over free nodes of the monitored residual
  double step = 0.0;     // accepted line-search step
};

/// Solved C_A-potential: u = s on E, u = 0 off F, residual ~ 0 on F \ E.
struct PotentialField {
  std::vector<double> u;
  double s = 0.0;
  std::string e_name;
  std::string f_name;
  std::uint64_t mesh_id = 0;
  double tol_res = 0.0;
  double residual_max = 0.0;
  int iterations = 0;
  int direct_fallbacks = 0;  // linear solves that fell back from Krylov to LU
  bool converged = false;
  std::vector<ResidualRecord> history;
};

class SolverDiverged : public std::runtime_error {
 public:
  SolverDiverged(const std::string& what, PotentialField best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const PotentialField& best() const { return best_; }

 private:
  PotentialField best_;
};

/// Solves the discrete Dirichlet problem with boundary level s on E and 0
/// outside F. Throws IncompatiblePair if E is not inside F and SolverDiverged
/// when the residual target is not reached.
PotentialField solve_dirichlet(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                               double s, const SolverOptions& opts = {});

/// Max-norm of r over the free nodes F \ E.
double free_residual_max(const Mesh& mesh, std::span<const double> r, const NodeSet& e, const NodeSet& f);

}  // namespace moncap

#endif  // MONCAP_SOLVER_HPP
