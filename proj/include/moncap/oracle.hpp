#ifndef MONCAP_ORACLE_HPP
#define MONCAP_ORACLE_HPP

#include "moncap/flux.hpp"

namespace moncap {

/// Annulus r < |x| < R in dimension n with growth exponent p.
struct RadialSpec {
  int n = 2;
  double p = 2.0;
  double r = 0.1;
  double R = 0.4;

  void validate() const;
};

/// Surface measure of the unit sphere in R^n.
double unit_sphere_measure(int n);

/// Closed form sigma_{n-1} I^{1-p} with I = int_r^R rho^{-(n-1)/(p-1)} d rho.
double radial_p_capacity(const RadialSpec& spec);

/// Ly (b - a)^{1-p}: capacity of the slab a <= x <= b with height Ly.
double strip_capacity(double p, double a, double b, double Ly);

/// 1-D reference for an isotropic flux a(xi) = g(|xi|) xi/|xi|: the flux
/// through spheres g(|u'|) rho^{n-1} = K is constant, K is found by bisection
/// so that int |u'| = s, and the capacity is sigma int g(|u'|)|u'| rho^{n-1}
/// evaluated by composite Simpson on M subintervals.
double radial_numeric(const RadialSpec& spec, const Flux& flux, int M, double s = 1.0);

}  // namespace moncap

#endif  // MONCAP_ORACLE_HPP
