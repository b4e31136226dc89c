#include <doctest.h>
#include <nlohmann/json.hpp>

#include "moncap/oracle.hpp"
#include "moncap/properties.hpp"

using namespace moncap;

TEST_SUITE("properties") {
  TEST_CASE("order suite on a coarse grid") {
    const Mesh m(16, 1.0);
    const SuiteReport r = run_order_suite(m, {Flux::p_laplacian(2.0), Flux::p_laplacian(3.0)}, 6, 7);
    CHECK(r.passed());
    CHECK(r.instances == 12);
    CHECK(r.audit.solves > 0);
    CHECK(r.audit.bounds_checked > 0);
    CHECK(r.summary().rfind("suite order: PASS", 0) == 0);
  }

  TEST_CASE("subadditivity suite on a coarse grid") {
    const Mesh m(16, 1.0);
    const SuiteReport r = run_subadditivity_suite(m, {Flux::p_laplacian(2.0)}, 6, 8);
    CHECK(r.passed());
    CHECK(r.extra.contains("checks"));
  }

  TEST_CASE("comparison and bounds suites") {
    const Mesh m(16, 1.0);
    CHECK(run_comparison_suite(m, Flux::p_laplacian(2.0), 5, 9).passed());
    CHECK(run_bounds_suite(m, {Flux::anisotropic_p(3.0, 1.0, 2.0)}, 3, 10).passed());
  }

  TEST_CASE("invariance suite") {
    const Mesh m(12, 1.0);
    const SuiteReport r = run_invariance_suite(m, 3, 11, {}, 3);
    CHECK(r.passed());
  }

  TEST_CASE("s suite") {
    const Mesh m(12, 1.0);
    SSuiteOptions so;
    so.s_grid = {-2.0, -1.0, 0.0, 1.0, 2.0};
    so.identity_instances = 2;
    so.sweep_instances = 1;
    CHECK(run_s_suite(m, {Flux::p_laplacian(2.0)}, so, 12).passed());
  }

  TEST_CASE("reports are deterministic and independent of the worker count") {
    const Mesh m(12, 1.0);
    const std::vector<Flux> fluxes{Flux::p_laplacian(2.0)};
    SuiteOptions one, two;
    two.jobs = 2;
    const std::string a = run_order_suite(m, fluxes, 4, 13, one).to_json().dump();
    const std::string b = run_order_suite(m, fluxes, 4, 13, one).to_json().dump();
    const std::string c = run_order_suite(m, fluxes, 4, 13, two).to_json().dump();
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a != run_order_suite(m, fluxes, 4, 14, one).to_json().dump());
  }

  TEST_CASE("sequence demo") {
    const Mesh m(24, 1.0);
    const NodeSet f = rasterize(ShapeExpr::disk(0.5, 0.5, 0.4), m, "F");
    std::vector<NodeSet> chain;
    for (double r : {0.05, 0.1, 0.2}) chain.push_back(rasterize(ShapeExpr::disk(0.5, 0.5, r), m));
    const Flux p3 = Flux::p_laplacian(3.0);
    CHECK(run_sequence_demo(m, p3, chain, f, ChainMode::increasing_e).passed());
    std::vector<NodeSet> shuffled{chain[1], chain[0], chain[2]};
    CHECK_THROWS_AS(run_sequence_demo(m, p3, shuffled, f, ChainMode::increasing_e), InvalidInput);
  }

  TEST_CASE("strip convergence is exact") {
    const Geometry strip{"strip", ShapeExpr::halfplane(Axis::x, 0.25, Side::le),
                         ShapeExpr::complement(ShapeExpr::halfplane(Axis::x, 0.75, Side::ge))};
    const SuiteReport r = run_convergence_study(strip, Flux::p_laplacian(3.0), {8, 16, 32},
                                                strip_capacity(3.0, 0.25, 0.75, 1.0));
    CHECK(r.passed());
    for (const auto& rec : r.records) CHECK(rec.values["relative_error"].get<double>() <= 1e-8);
  }

  TEST_CASE("flux gap for a skew part vanishes on symmetric problems") {
    const Geometry g{"annulus", ShapeExpr::disk(0.5, 0.5, 0.1), ShapeExpr::disk(0.5, 0.5, 0.4)};
    Mat2 a;
    a << 1.0, 0.5, -0.5, 1.0;
    const SuiteReport r = run_flux_gap_study(g, Flux::p_laplacian(2.0), Flux::linear_matrix(a), {8, 16});
    CHECK(r.passed());
  }

  TEST_CASE("report JSON") {
    SuiteReport r;
    r.suite = "x";
    r.instances = 100;
    r.skipped = 2;
    CHECK(r.skip_budget_ok());
    r.skipped = 3;
    CHECK_FALSE(r.skip_budget_ok());
    const auto j = r.to_json();
    CHECK(j["suite"] == "x");
    CHECK(j["audit"]["worst_bound_scaled"].is_null());
  }
}
