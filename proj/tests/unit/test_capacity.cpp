#include <cmath>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "moncap/capacity.hpp"
#include "moncap/oracle.hpp"

using namespace moncap;

namespace {

NodeSet strip_e(const Mesh& m) { return rasterize(ShapeExpr::halfplane(Axis::x, 0.25, Side::le), m, "E"); }
NodeSet strip_f(const Mesh& m) {
  return rasterize(ShapeExpr::complement(ShapeExpr::halfplane(Axis::x, 0.75, Side::ge)), m, "F");
}

}  // namespace

TEST_SUITE("capacity") {
  TEST_CASE("strip values") {
    for (int n : {8, 16}) {
      const Mesh m(n, 1.0);
      for (double p : {1.5, 2.0, 3.0}) {
        const CapacityReport r = compute_capacity(m, Flux::p_laplacian(p), strip_e(m), strip_f(m), 1.0).report;
        const double expect = strip_capacity(p, 0.25, 0.75, 1.0);
        CHECK(r.c_inner == doctest::Approx(expect).epsilon(1e-9));
        CHECK(r.c_energy == doctest::Approx(expect).epsilon(1e-9));
        CHECK(r.c_outer == doctest::Approx(expect).epsilon(1e-9));
        CHECK(std::abs(r.c_inner - r.c_energy) <= r.tol_cap);
      }
    }
  }

  TEST_CASE("single node against its neighbours") {
    const Mesh m(4, 1.0);
    NodeSet e = NodeSet::empty(m, "center");
    e.insert(m.node_index(2, 2));
    const CapacityReport r = compute_capacity(m, Flux::p_laplacian(2.0), e, e, 1.0).report;
    CHECK(r.c_inner == doctest::Approx(4.0));
    CHECK(r.free_nodes == 0);
  }

  TEST_CASE("incompatible pair is infinite") {
    const Mesh m(16, 1.0);
    const CapacityResult r = compute_capacity(m, Flux::p_laplacian(2.0), rasterize(ShapeExpr::disk(0.5, 0.5, 0.3), m),
                                              rasterize(ShapeExpr::disk(0.5, 0.5, 0.2), m), 1.0);
    CHECK(r.report.infinite());
    CHECK_FALSE(r.potential.has_value());
    CHECK(r.report.to_json()["capacity"] == "infinity");
    const CapacityResult clipped =
        compute_capacity(m, Flux::p_laplacian(2.0), rasterize(ShapeExpr::disk(0.5, 0.5, 0.3), m),
                         rasterize(ShapeExpr::disk(0.5, 0.5, 0.2), m), 1.0, {}, CapacityOptions{true, false});
    CHECK(clipped.report.compatible);
    CHECK(clipped.report.free_nodes == 0);
    CHECK(clipped.report.c_inner > 0.0);
  }

  TEST_CASE("frozen annulus value") {
    const Mesh m(32, 1.0);
    const NodeSet e = rasterize(ShapeExpr::disk(0.5, 0.5, 0.1), m);
    const NodeSet f = rasterize(ShapeExpr::disk(0.5, 0.5, 0.4), m);
    const CapacityReport r = compute_capacity(m, Flux::p_laplacian(2.0), e, f, 1.0).report;
    CHECK(r.c_inner == doctest::Approx(4.313635805033483).epsilon(1e-9));
    CHECK(r.constrained_nodes + r.free_nodes == m.num_nodes());
  }

  TEST_CASE("distributions") {
    const Mesh m(16, 1.0);
    const NodeSet e = rasterize(ShapeExpr::disk(0.5, 0.5, 0.12), m, "E");
    const NodeSet f = rasterize(ShapeExpr::disk(0.5, 0.5, 0.35), m, "F");
    const Flux flux = Flux::p_laplacian(3.0);
    for (double s : {1.5, -1.5}) {
      const CapacityResult res = compute_capacity(m, flux, e, f, s);
      const auto [lambda, nu] = distributions(m, flux, *res.potential, e, f);
      CHECK(lambda.total == doctest::Approx(nu.total).epsilon(1e-8));
      CHECK(std::abs(s) * lambda.total == doctest::Approx(res.report.c_inner).epsilon(1e-9));
      CHECK(lambda.min_weight() >= -1e-8);
      CHECK(nu.min_weight() >= -1e-8);
      if (s > 0) {
        CHECK(lambda.carrier == "E");
      } else {
        CHECK(nu.carrier == "E");
      }
    }
  }

  TEST_CASE("power law and sweep") {
    const Mesh m(16, 1.0);
    const NodeSet e = rasterize(ShapeExpr::rect(0.3, 0.3, 0.45, 0.6), m);
    const NodeSet f = rasterize(ShapeExpr::disk(0.45, 0.45, 0.4), m);
    const Flux p3 = Flux::p_laplacian(3.0);
    const double c1 = compute_capacity(m, p3, e, f, 1.0).report.c_inner;
    for (double s : {-2.0, 0.5, 3.0}) {
      const double cs = compute_capacity(m, p3, e, f, s).report.c_inner;
      CHECK(cs == doctest::Approx(std::pow(std::abs(s), 3.0) * c1).epsilon(1e-8));
    }
    CHECK_THROWS_AS(sweep_s(m, p3, e, f, {2.0, -1.0}), InvalidInput);
    const auto sweep = sweep_s(m, p3, e, f, {-1.0, 0.0, 1.0, 2.0});
    REQUIRE(sweep.size() == 4);
    CHECK(sweep[0].s == -1.0);
    CHECK(sweep[1].c_inner == 0.0);
    CHECK(sweep[2].c_inner == doctest::Approx(c1).epsilon(1e-8));
    for (const auto& r : sweep) CHECK(r.converged);
  }

  TEST_CASE("sandwich constants") {
    const SandwichConstants k = sandwich_constants(FluxConstants{}, 2.0, 1.0, 1.0);
    CHECK(k.k1 == doctest::Approx(4.0));
    CHECK(k.k2 == 0.0);
    CHECK(k.k3 == 0.0);
    const Mesh m(16, 1.0);
    const NodeSet e = rasterize(ShapeExpr::disk(0.5, 0.5, 0.1), m);
    const NodeSet f = rasterize(ShapeExpr::disk(0.5, 0.5, 0.4), m);
    const CapacityReport r =
        compute_capacity(m, Flux::weighted_p_laplacian(2.0, WeightSpec{}), e, f, 1.5, {}, CapacityOptions{false, true})
            .report;
    REQUIRE(r.cp_value.has_value());
    CHECK(sandwich_margins(r).holds());
    CHECK(discrete_area(m, NodeSet::all(m)) == doctest::Approx(1.0));
    CHECK(node_diameter(m, NodeSet::all(m)) == doctest::Approx(std::sqrt(2.0)));
  }
}
