#ifndef MONCAP_FLUX_HPP
#define MONCAP_FLUX_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "moncap/errors.hpp"

namespace moncap {

using Vec2 = Eigen::Vector2d;
using Point2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class FluxKind {
  p_laplacian,
  weighted_p_laplacian,
  anisotropic_p,
  linear_matrix,
  flat_core_p,
  s_transformed,
  weighted_sum
};

std::string to_string(FluxKind kind);

/// Structural constants of a flux: a(x,xi).xi >= c1|xi|^p - b1 and
/// |a(x,xi)| <= c2|xi|^{p-1} + b2. b1 and b2 are constants.
struct FluxConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

/// Smooth weight w(x,y) = w_min + (w_max - w_min) (1 + sin(2 pi f x) sin(2 pi f y)) / 2.
struct WeightSpec {
  double w_min = 1.0;
  double w_max = 2.0;
  double freq = 1.0;

  double operator()(const Point2& x) const;
};

/// Monotone flux a(x, xi). Immutable; copies share the representation.
class Flux {
 public:
  static Flux p_laplacian(double p);
  static Flux weighted_p_laplacian(double p, const WeightSpec& weight);
  /// a(xi) = (xi^T B xi)^{(p-2)/2} B xi with B = diag(alpha, beta).
  static Flux anisotropic_p(double p, double alpha, double beta);
  /// a(xi) = M xi (p = 2); M may carry a skew part.
  static Flux linear_matrix(const Mat2& m);
  /// a(xi) = (|xi| - rho0)_+^{p-1} xi/|xi|, zero inside the core |xi| <= rho0.
  static Flux flat_core(double p, double core_radius);

  FluxKind kind() const;
  double p() const;
  double q() const { return p() / (p() - 1.0); }
  const FluxConstants& constants() const;
  bool differentiable() const;

  /// True when a(x, R xi) = R a(x, xi) for rotations R and a has no x-dependence.
  bool is_isotropic() const;
  bool x_dependent() const;
  /// Jacobian d a / d xi is symmetric (a is the gradient of a convex energy).
  bool symmetric_jacobian() const;

  Vec2 eval(const Point2& x, const Vec2& xi) const;

  /// Smoothed flux: |xi| replaced by sqrt(|xi|^2 + eps^2) inside the kind's
  /// formula (flat_core additionally gains eps * xi). eps = 0 gives eval().
  Vec2 eval_regularized(const Point2& x, const Vec2& xi, double eps) const;

  /// Exact derivative of eval_regularized with respect to xi.
  Mat2 jacobian(const Point2& x, const Vec2& xi, double eps) const;

  nlohmann::json to_json() const;
  static Flux from_json(const nlohmann::json& j);

  std::string describe() const;

  struct Node;

 private:
  explicit Flux(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;

  friend Flux s_transform(const Flux& flux, double s);
  friend Flux combine(const Flux& f1, const Flux& f2, double w1, double w2);
};

Vec2 eval_flux(const Flux& flux, const Point2& x, const Vec2& xi);
Mat2 flux_jacobian(const Flux& flux, const Point2& x, const Vec2& xi, double eps);

/// a_s(x, xi) = s a(x, s xi); c1, c2 scale by |s|^p, b2 by |s|.
Flux s_transform(const Flux& flux, double s);

/// Pointwise w1 a1 + w2 a2. Both fluxes must share p.
Flux combine(const Flux& f1, const Flux& f2, double w1, double w2);

// ---------------------------------------------------------------------------
// Structural condition checker

struct ConditionResult {
  std::string name;
  bool passed = true;
  double worst_margin = 0.0;        // raw margin at the witness
  double worst_scaled_margin = 0.0; // margin / (1 + |xi|^p + |eta|^p)
  Point2 x = Point2::Zero();
  Vec2 xi = Vec2::Zero();
  Vec2 eta = Vec2::Zero();
};

struct ConditionReport {
  ConditionResult zero;        // a(x,0) = 0
  ConditionResult monotone;    // (a(x,xi) - a(x,eta)).(xi - eta) >= 0
  ConditionResult coercive;    // a(x,xi).xi >= c1|xi|^p - b1
  ConditionResult growth;      // |a(x,xi)| <= c2|xi|^{p-1} + b2
  std::size_t samples = 0;
  double tolerance = 1e-12;

  bool all_passed() const {
    return zero.passed && monotone.passed && coercive.passed && growth.passed;
  }
  nlohmann::json to_json() const;
};

using FluxFunction = std::function<Vec2(const Point2&, const Vec2&)>;

/// Randomized check of the four structural conditions. x is sampled in
/// [0, L]^2, xi and eta uniformly in the disk of radius xi_radius.
ConditionReport check_conditions(const Flux& flux, std::size_t n_samples, double xi_radius,
                                 std::uint64_t seed, double L = 1.0);

/// Same check for an arbitrary map with declared constants (test fixtures).
ConditionReport check_conditions(const FluxFunction& a, double p, const FluxConstants& constants,
                                 std::size_t n_samples, double xi_radius, std::uint64_t seed,
                                 double L = 1.0);

}  // namespace moncap

#endif  // MONCAP_FLUX_HPP
