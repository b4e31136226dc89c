#include <cmath>
#include <numbers>

#include <doctest.h>

#include "moncap/oracle.hpp"

using namespace moncap;

TEST_SUITE("oracle") {
  TEST_CASE("closed forms") {
    CHECK(radial_p_capacity(RadialSpec{2, 2.0, 0.1, 0.4}) == doctest::Approx(4.532360141827194).epsilon(1e-14));
    CHECK(radial_p_capacity(RadialSpec{2, 3.0, 0.1, 0.4}) == doctest::Approx(5.0 * std::numbers::pi).epsilon(1e-13));
    CHECK(radial_p_capacity(RadialSpec{3, 2.0, 0.1, 0.4}) == doctest::Approx(4.0 * std::numbers::pi / 7.5).epsilon(1e-13));
    CHECK(radial_p_capacity(RadialSpec{3, 3.0, 0.1, 0.4}) ==
          doctest::Approx(4.0 * std::numbers::pi / std::log(4.0) / std::log(4.0)).epsilon(1e-13));
    CHECK(unit_sphere_measure(2) == doctest::Approx(2.0 * std::numbers::pi));
    CHECK(unit_sphere_measure(3) == doctest::Approx(4.0 * std::numbers::pi));
    CHECK(unit_sphere_measure(4) == doctest::Approx(2.0 * std::numbers::pi * std::numbers::pi));
    CHECK(strip_capacity(2.0, 0.25, 0.75, 1.0) == 2.0);
    CHECK(strip_capacity(3.0, 0.25, 0.75, 2.0) == doctest::Approx(8.0));
  }

  TEST_CASE("radial numeric reference") {
    for (double p : {1.5, 2.0, 3.0}) {
      for (int n : {2, 3}) {
        const RadialSpec spec{n, p, 0.1, 0.4};
        const double closed = radial_p_capacity(spec);
        CHECK(radial_numeric(spec, Flux::p_laplacian(p), 2000) == doctest::Approx(closed).epsilon(1e-6));
        CHECK(radial_numeric(spec, Flux::p_laplacian(p), 2000, 2.0) ==
              doctest::Approx(std::pow(2.0, p) * closed).epsilon(1e-6));
      }
    }
    // A jump of 0.2 over width 0.3 fits inside the unit core.
    CHECK(radial_numeric(RadialSpec{2, 3.0, 0.1, 0.4}, Flux::flat_core(3.0, 1.0), 2000, 0.2) == 0.0);
    const double fc = radial_numeric(RadialSpec{2, 3.0, 0.1, 0.4}, Flux::flat_core(3.0, 1.0), 2000, 5.0);
    CHECK(fc > 0.0);
    CHECK(fc < radial_numeric(RadialSpec{2, 3.0, 0.1, 0.4}, Flux::p_laplacian(3.0), 2000, 5.0));
  }

  TEST_CASE("invalid input") {
    CHECK_THROWS_AS(radial_p_capacity(RadialSpec{1, 2.0, 0.1, 0.4}), InvalidInput);
    CHECK_THROWS_AS(radial_p_capacity(RadialSpec{2, 1.0, 0.1, 0.4}), InvalidInput);
    CHECK_THROWS_AS(radial_p_capacity(RadialSpec{2, 2.0, 0.4, 0.1}), InvalidInput);
    CHECK_THROWS_AS(radial_p_capacity(RadialSpec{2, 2.0, 0.0, 0.1}), InvalidInput);
    CHECK_THROWS_AS(strip_capacity(2.0, 0.5, 0.5, 1.0), InvalidInput);
    CHECK_THROWS_AS(radial_numeric(RadialSpec{}, Flux::anisotropic_p(2.0, 1.0, 2.0), 100), InvalidInput);
    CHECK_THROWS_AS(radial_numeric(RadialSpec{}, Flux::p_laplacian(2.0), 1), InvalidInput);
  }
}
