#ifndef MONCAP_CONFIG_HPP
#define MONCAP_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moncap/errors.hpp"
#include "moncap/flux.hpp"
#include "moncap/mesh.hpp"
#include "moncap/oracle.hpp"
#include "moncap/solver.hpp"

namespace moncap {

/// Schema violation in an experiment config; the message names the offending path.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct SuiteBlock {
  std::string name;
  std::size_t instances = 50;
  std::vector<Flux> fluxes;  // empty: default family
  std::size_t inits = 5;
  std::size_t identity_instances = 20;
  std::size_t sweep_instances = 2;
  /// Sequence demo: shapes of the chain and the mode name.
  std::vector<ShapeExpr> chain;
  std::string mode = "increasing_E";
};

struct OracleBlock {
  enum class Kind { value, radial, radial_numeric, strip } kind = Kind::value;
  double value = 0.0;
  RadialSpec radial;
  int simpson_intervals = 2000;
  double strip_a = 0.25, strip_b = 0.75, strip_height = 1.0;

  /// Reference value for the config's flux.
  double evaluate(const Flux& flux) const;
  nlohmann::json to_json() const;
};

struct ConvergeBlock {
  double rel_tol = 0.05;
  std::size_t allowed_increases = 1;
  std::optional<Flux> compare_flux;
};

struct CheckFluxBlock {
  std::size_t samples = 10000;
  double radius = 10.0;
};

struct ExperimentConfig {
  int N = 32;
  double L = 1.0;
  Flux flux = Flux::p_laplacian(2.0);
  std::optional<ShapeExpr> E;
  std::optional<ShapeExpr> F;
  double s = 1.0;
  SolverOptions solver;
  bool clip_E_to_F = false;
  std::optional<SuiteBlock> suite;
  std::vector<double> s_grid;
  std::vector<int> N_list;
  std::optional<OracleBlock> oracle;
  ConvergeBlock converge;
  CheckFluxBlock check_flux;
  std::string output;
  std::uint64_t seed = 0;

  /// The parsed document, used for hashing.
  nlohmann::json source;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace moncap

#endif  // MONCAP_CONFIG_HPP
