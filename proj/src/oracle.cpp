#include "moncap/oracle.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace moncap {

void RadialSpec::validate() const {
  if (n < 2) throw InvalidInput("radial spec requires n >= 2");
  if (!(p > 1.0)) throw InvalidInput("radial spec requires p > 1");
  if (!(r > 0.0) || !(r < R) || !std::isfinite(R)) throw InvalidInput("radial spec requires 0 < r < R");
}

double unit_sphere_measure(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double radial_p_capacity(const RadialSpec& spec) {
  spec.validate();
  const double beta = (spec.n - 1.0) / (spec.p - 1.0);
  double integral;
  if (spec.n - 1 == spec.p - 1.0) {
    integral = std::log(spec.R / spec.r);
  } else {
    integral = (std::pow(spec.R, 1.0 - beta) - std::pow(spec.r, 1.0 - beta)) / (1.0 - beta);
  }
  return unit_sphere_measure(spec.n) * std::pow(integral, 1.0 - spec.p);
}

double strip_capacity(double p, double a, double b, double Ly) {
  if (!(p > 1.0)) throw InvalidInput("strip_capacity requires p > 1");
  if (!(a >= 0.0) || !(a < b)) throw InvalidInput("strip_capacity requires 0 <= a < b");
  if (!(Ly > 0.0)) throw InvalidInput("strip_capacity requires Ly > 0");
  return Ly * std::pow(b - a, 1.0 - p);
}

namespace {

constexpr int kBisectionSteps = 80;

double simpson(const std::function<double(double)>& f, double a, double b, int m) {
  const double h = (b - a) / m;
  double sum = f(a) + f(b);
  for (int k = 1; k < m; ++k) sum += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return sum * h / 3.0;
}

// Radial profile of an isotropic flux and its generalized inverse.
class RadialProfile {
 public:
  explicit RadialProfile(const Flux& flux) : flux_(flux) {
    // Largest t with g(t) = 0 (flat cores); zero for strictly monotone g.
    if (g(1e-8) > 0.0) return;
    double hi = 1.0;
    while (g(hi) <= 0.0) hi *= 2.0;
    double lo = 0.0;
    for (int k = 0; k < kBisectionSteps; ++k) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0.0 ? hi : lo) = mid;
    }
    core_ = lo;
  }

  double g(double t) const { return flux_.eval(centre_, Vec2(t, 0.0)).norm(); }

  /// sup { t : g(t) <= y }.
  double inverse(double y) const {
    if (y <= 0.0) return core_;
    double lo = core_, hi = std::max(1.0, 2.0 * core_);
    while (g(hi) < y) {
      lo = hi;
      hi *= 2.0;
    }
    for (int k = 0; k < kBisectionSteps && hi - lo > 1e-17 * hi; ++k) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  const Flux& flux_;
  Point2 centre_ = Point2(0.5, 0.5);
  double core_ = 0.0;
};

}  // namespace

double radial_numeric(const RadialSpec& spec, const Flux& flux, int M, double s) {
  spec.validate();
  if (!flux.is_isotropic()) throw InvalidInput("radial_numeric requires an isotropic flux");
  if (M < 2) throw InvalidInput("radial_numeric requires M >= 2");
  if (!(s > 0.0)) throw InvalidInput("radial_numeric requires s > 0");
  if (M % 2) ++M;

  const RadialProfile profile(flux);
  const double nm1 = spec.n - 1.0;
  auto slope = [&](double k, double rho) { return profile.inverse(k / std::pow(rho, nm1)); };
  auto drop = [&](double k) {
    return simpson([&](double rho) { return slope(k, rho); }, spec.r, spec.R, M);
  };

  // Gradients inside the flat core carry no flux: zero capacity.
  if (drop(0.0) >= s) return 0.0;

  double k_lo = 0.0, k_hi = 1.0;
  while (drop(k_hi) < s) {
    k_lo = k_hi;
    k_hi *= 2.0;
  }
  for (int it = 0; it < kBisectionSteps && k_hi - k_lo > 1e-16 * k_hi; ++it) {
    const double mid = 0.5 * (k_lo + k_hi);
    (drop(mid) < s ? k_lo : k_hi) = mid;
  }
  const double k = 0.5 * (k_lo + k_hi);
  const double energy = simpson(
      [&](double rho) {
        const double t = slope(k, rho);
        return profile.g(t) * t * std::pow(rho, nm1);
      },
      spec.r, spec.R, M);
  return unit_sphere_measure(spec.n) * energy;
}

}  // namespace moncap
