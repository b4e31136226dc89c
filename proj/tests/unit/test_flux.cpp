#include <cmath>
#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "moncap/flux.hpp"
#include "moncap/properties.hpp"

using namespace moncap;

namespace {

std::vector<Flux> shipped() {
  auto fam = default_flux_family();
  Mat2 m;
  m << 2.0, -0.3, 0.7, 1.5;
  fam.push_back(Flux::linear_matrix(m));
  fam.push_back(Flux::weighted_p_laplacian(3.0, WeightSpec{0.5, 3.0, 2.0}));
  fam.push_back(Flux::anisotropic_p(1.5, 2.0, 0.5));
  fam.push_back(Flux::flat_core(2.0, 0.5));
  fam.push_back(s_transform(Flux::p_laplacian(3.0), -1.5));
  fam.push_back(combine(Flux::p_laplacian(2.0), Flux::linear_matrix(m), 1.0, 0.5));
  return fam;
}

double rel(const Vec2& a, const Vec2& b) { return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm())); }

}  // namespace

TEST_SUITE("flux") {
  TEST_CASE("p-Laplacian values and Jacobian") {
    const Flux f = Flux::p_laplacian(4.0);
    const Point2 x(0.3, 0.3);
    CHECK(f.eval(x, Vec2(1.0, 0.0)).isApprox(Vec2(1.0, 0.0)));
    CHECK(f.eval(x, Vec2(2.0, 0.0)).isApprox(Vec2(8.0, 0.0)));
    const Mat2 j = f.jacobian(x, Vec2(1.0, 0.0), 0.0);
    CHECK(j(0, 0) == doctest::Approx(3.0));
    CHECK(j(1, 1) == doctest::Approx(1.0));
    CHECK(j(0, 1) == doctest::Approx(0.0));
    CHECK(f.eval(x, Vec2::Zero()).norm() == 0.0);
  }

  TEST_CASE("declared constants") {
    const Flux w = Flux::weighted_p_laplacian(2.0, WeightSpec{1.0, 2.0, 1.0});
    CHECK(w.constants().c1 == 1.0);
    CHECK(w.constants().c2 == 2.0);
    const Flux fc = Flux::flat_core(3.0, 1.0);
    CHECK(fc.constants().c1 == doctest::Approx(0.25));
    CHECK(fc.constants().b1 == doctest::Approx(2.0));
    Mat2 m;
    m << 1.0, 0.5, -0.5, 1.0;
    const Flux lin = Flux::linear_matrix(m);
    CHECK(lin.constants().c1 == doctest::Approx(1.0));
    CHECK(lin.constants().c2 == doctest::Approx(std::sqrt(1.25)));
  }

  TEST_CASE("Jacobian agrees with central differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0), angle(0.0, 2.0 * M_PI), mag(0.1, 10.0);
    for (const Flux& f : shipped()) {
      double worst = 0.0;
      for (int k = 0; k < 1000; ++k) {
        const Point2 x(unit(rng), unit(rng));
        const double r = mag(rng), th = angle(rng);
        const Vec2 xi(r * std::cos(th), r * std::sin(th));
        if (f.kind() == FluxKind::flat_core_p && std::abs(r - 1.0) < 1e-3) continue;
        const double h = 1e-5 * r;
        Mat2 fd;
        for (int c = 0; c < 2; ++c) {
          Vec2 d = Vec2::Zero();
          d[c] = h;
          fd.col(c) = (f.eval(x, xi + d) - f.eval(x, xi - d)) / (2.0 * h);
        }
        const Mat2 j = f.jacobian(x, xi, 0.0);
        worst = std::max(worst, (j - fd).norm() / std::max(1e-12, j.norm()));
      }
      INFO(f.describe());
      CHECK(worst <= 1e-6);
    }
  }

  TEST_CASE("regularized Jacobian is the derivative of the regularized flux") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 1.0);
    for (const Flux& f : shipped()) {
      for (int k = 0; k < 200; ++k) {
        const Point2 x(0.37, 0.61);
        const Vec2 xi(g(rng), g(rng));
        const double eps = 1e-2;
        const double h = 1e-6;
        Mat2 fd;
        for (int c = 0; c < 2; ++c) {
          Vec2 d = Vec2::Zero();
          d[c] = h;
          fd.col(c) = (f.eval_regularized(x, xi + d, eps) - f.eval_regularized(x, xi - d, eps)) / (2.0 * h);
        }
        const Mat2 j = f.jacobian(x, xi, eps);
        INFO(f.describe());
        CHECK((j - fd).norm() <= 1e-5 * (1.0 + j.norm()));
      }
    }
  }

  TEST_CASE("s_transform") {
    const Flux p3 = Flux::p_laplacian(3.0);
    const Point2 x(0.5, 0.5);
    const Vec2 xi(0.3, -1.7);
    const Flux t = s_transform(p3, -2.0);
    CHECK(rel(t.eval(x, xi), std::pow(2.0, 3.0) * p3.eval(x, xi)) < 1e-14);
    CHECK(t.constants().c1 == doctest::Approx(8.0));
    CHECK(rel(s_transform(p3, 1.0).eval(x, xi), p3.eval(x, xi)) == 0.0);

    Mat2 m;
    m << 1.0, 0.5, -0.5, 1.0;
    const Flux lin = Flux::linear_matrix(m);
    CHECK(rel(s_transform(lin, 2.0).eval(x, xi), 4.0 * m * xi) < 1e-15);
    CHECK_THROWS_AS(s_transform(lin, 0.0), InvalidInput);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 3.0);
    for (const Flux& f : shipped()) {
      for (double s : {-3.0, -0.4, 0.7, 2.5}) {
        const Flux back = s_transform(s_transform(f, s), 1.0 / s);
        for (int k = 0; k < 50; ++k) {
          const Vec2 v(g(rng), g(rng));
          const Vec2 a = f.eval(x, v), b = back.eval(x, v);
          if (a.norm() == 0.0) {
            CHECK(b.norm() <= 1e-14);
          } else {
            CHECK(rel(a, b) <= 1e-14);
          }
        }
      }
    }
  }

  TEST_CASE("combine") {
    Mat2 m;
    m << 1.0, 0.5, -0.5, 1.0;
    const Flux p2 = Flux::p_laplacian(2.0);
    const Flux lin = Flux::linear_matrix(m);
    const Point2 x(0.2, 0.9);
    const Vec2 xi(1.3, -0.4);
    CHECK(rel(combine(p2, lin, 1.0, 0.0).eval(x, xi), p2.eval(x, xi)) == 0.0);
    CHECK(rel(combine(p2, lin, 1.0, 1.0).eval(x, xi), (Mat2::Identity() + m) * xi) < 1e-15);
    CHECK_THROWS_AS(combine(p2, Flux::p_laplacian(3.0), 1.0, 1.0), InvalidInput);
    const Flux c = combine(Flux::flat_core(3.0, 1.0), Flux::anisotropic_p(3.0, 1.0, 2.0), 0.5, 2.0);
    CHECK(check_conditions(c, 10000, 10.0, 5).all_passed());
    CHECK(c.constants().c1 == doctest::Approx(2.0));
  }

  TEST_CASE("linear flux energy sees only the symmetric part") {
    Mat2 m;
    m << 1.0, 0.5, -0.5, 1.0;
    const Flux lin = Flux::linear_matrix(m);
    const Mat2 sym = 0.5 * (m + m.transpose());
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int k = 0; k < 100; ++k) {
      const Vec2 xi(g(rng), g(rng));
      CHECK(lin.eval(Point2(0.5, 0.5), xi).dot(xi) == doctest::Approx(xi.dot(sym * xi)).epsilon(1e-14));
    }
    CHECK_FALSE(lin.symmetric_jacobian());
  }

  TEST_CASE("shipped fluxes satisfy the structural conditions") {
    for (const Flux& f : shipped()) {
      const ConditionReport rep = check_conditions(f, 10000, 10.0, 2024);
      INFO(f.describe());
      CHECK(rep.all_passed());
      CHECK(rep.samples == 10000);
    }
  }

  TEST_CASE("adversarial fixture fails monotonicity with a witness") {
    const FluxFunction minus = [](const Point2&, const Vec2& xi) -> Vec2 { return -xi; };
    const ConditionReport rep = check_conditions(minus, 2.0, FluxConstants{}, 10000, 10.0, 9);
    CHECK_FALSE(rep.monotone.passed);
    CHECK(rep.zero.passed);
    const Vec2 d = rep.monotone.xi - rep.monotone.eta;
    CHECK(rep.monotone.worst_margin == doctest::Approx(-d.squaredNorm()).epsilon(1e-12));
    CHECK(d.norm() > 0.0);
  }

  TEST_CASE("flat-core b1 scan stays below the declared constant") {
    // Smallest valid b1 for c1 = 2^{1-p}: max_t c1 t^p - (t - 1)_+^{p-1} t.
    const double p = 3.0, c1 = std::pow(2.0, 1.0 - p);
    double needed = 0.0;
    for (int k = 0; k <= 200000; ++k) {
      const double t = 10.0 * k / 200000.0;
      needed = std::max(needed, c1 * std::pow(t, p) - std::pow(std::max(t - 1.0, 0.0), p - 1.0) * t);
    }
    CHECK(needed == doctest::Approx(0.4686).epsilon(1e-3));
    CHECK(needed <= Flux::flat_core(p, 1.0).constants().b1);
  }

  TEST_CASE("JSON round trip and schema") {
    for (const Flux& f : shipped()) {
      const Flux g = Flux::from_json(f.to_json());
      CHECK(g.to_json() == f.to_json());
      CHECK(rel(g.eval(Point2(0.1, 0.8), Vec2(0.7, 2.0)), f.eval(Point2(0.1, 0.8), Vec2(0.7, 2.0))) == 0.0);
    }
    CHECK_THROWS_AS(Flux::from_json(nlohmann::json{{"kind", "p_laplacian"}, {"p", 2}, {"extra", 1}}),
                    InvalidInput);
    CHECK_THROWS_AS(Flux::from_json(nlohmann::json{{"kind", "nope"}}), InvalidInput);
    CHECK_THROWS_AS(Flux::p_laplacian(1.0), InvalidInput);
    Mat2 bad;
    bad << -1.0, 0.0, 0.0, 1.0;
    CHECK_THROWS_AS(Flux::linear_matrix(bad), InvalidInput);
  }

  TEST_CASE("non-finite evaluation throws") {
    const Flux f = Flux::p_laplacian(3.0);
    CHECK_THROWS(f.eval(Point2(0.5, 0.5), Vec2(std::nan(""), 0.0)));
  }
}
