#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "moncap/mesh.hpp"

using namespace moncap;

namespace {

ShapeExpr random_tree(std::mt19937_64& rng, int depth) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int pick = std::uniform_int_distribution<int>(0, depth > 0 ? 7 : 2)(rng);
  switch (pick) {
    case 0: return ShapeExpr::disk(u(rng), u(rng), 0.4 * u(rng));
    case 1: {
      const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
      return ShapeExpr::rect(std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d));
    }
    case 2: return ShapeExpr::halfplane(u(rng) < 0.5 ? Axis::x : Axis::y, u(rng), u(rng) < 0.5 ? Side::le : Side::ge);
    case 3: return ShapeExpr::union_of({random_tree(rng, depth - 1), random_tree(rng, depth - 1)});
    case 4: return ShapeExpr::intersect_of({random_tree(rng, depth - 1), random_tree(rng, depth - 1)});
    case 5: return ShapeExpr::difference(random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 6: return ShapeExpr::complement(random_tree(rng, depth - 1));
    default: return u(rng) < 0.5 ? ShapeExpr::all() : ShapeExpr::none();
  }
}

}  // namespace

TEST_SUITE("mesh") {
  TEST_CASE("small meshes") {
    const Mesh m2 = build_mesh(2, 1.0);
    CHECK(m2.num_nodes() == 9);
    CHECK(m2.num_triangles() == 8);
    CHECK(m2.triangle_area() == doctest::Approx(0.125));
    const Mesh m4 = build_mesh(4);
    CHECK(m4.node_index(2, 2) == 12);
    CHECK(m4.node(12).isApprox(Point2(0.5, 0.5)));
    CHECK_THROWS_AS(build_mesh(1), InvalidInput);
    CHECK_THROWS_AS(build_mesh(4, 0.0), InvalidInput);
  }

  TEST_CASE("triangle invariants") {
    for (int n : {2, 5, 16}) {
      const Mesh m(n, 2.0);
      CHECK(m.num_triangles() * m.triangle_area() == doctest::Approx(4.0));
      for (std::size_t k = 0; k < m.num_nodes(); ++k) {
        if (!m.on_outer_boundary(k)) CHECK(m.node_triangles(k).size() == 6);
      }
      for (std::size_t t = 0; t < m.num_triangles(); ++t) {
        Vec2 sum = Vec2::Zero();
        for (int c = 0; c < 3; ++c) sum += m.basis_gradient(t, c);
        CHECK(sum.norm() < 1e-12);
      }
    }
    const Mesh a(7, 1.0), b(7, 1.0);
    CHECK(a.id() == b.id());
    for (std::size_t t = 0; t < a.num_triangles(); ++t) CHECK(a.triangle(t) == b.triangle(t));
  }

  TEST_CASE("rasterize examples") {
    const Mesh m(4, 1.0);
    const NodeSet d = rasterize(ShapeExpr::disk(0.5, 0.5, 0.26), m);
    CHECK(d.count() == 5);
    for (auto [i, j] : {std::pair{2, 2}, {1, 2}, {3, 2}, {2, 1}, {2, 3}}) CHECK(d.contains(m.node_index(i, j)));
    const NodeSet h = rasterize(ShapeExpr::halfplane(Axis::x, 0.25, Side::le), m);
    CHECK(h.count() == 10);
    CHECK(rasterize(ShapeExpr::difference(ShapeExpr::all(), ShapeExpr::all()), m).is_empty());
  }

  TEST_CASE("combinators act on masks") {
    std::mt19937_64 rng(77);
    const Mesh m(12, 1.0);
    for (int k = 0; k < 100; ++k) {
      const ShapeExpr a = random_tree(rng, 2), b = random_tree(rng, 2);
      const NodeSet ma = rasterize(a, m), mb = rasterize(b, m);
      CHECK(rasterize(ShapeExpr::union_of({a, b}), m) == set_union(ma, mb));
      CHECK(rasterize(ShapeExpr::intersect_of({a, b}), m) == set_intersect(ma, mb));
      CHECK(rasterize(ShapeExpr::difference(a, b), m) == set_difference(ma, mb));
      CHECK(rasterize(ShapeExpr::complement(a), m) == set_complement(ma));
      CHECK(ShapeExpr::from_json(a.to_json()).to_json() == a.to_json());
    }
  }

  TEST_CASE("set algebra") {
    const Mesh m(6, 1.0);
    const NodeSet empty = NodeSet::empty(m);
    const NodeSet e = rasterize(ShapeExpr::disk(0.5, 0.5, 0.2), m);
    CHECK(is_subset(empty, e));
    CHECK(set_intersect(e, set_complement(e)).is_empty());
    NodeSet a = NodeSet::empty(m), b = NodeSet::empty(m);
    for (int k : {0, 1, 2, 3, 4}) a.insert(k);
    for (int k : {10, 11, 12}) b.insert(k);
    CHECK(set_union(a, b).count() == 8);
    CHECK(std::get<bool>(set_algebra(SetOp::subset, a, set_union(a, b))));
    CHECK(std::get<bool>(set_algebra(SetOp::equal, a, a)));
    CHECK(std::get<NodeSet>(set_algebra(SetOp::difference, a, a)).is_empty());
    const Mesh other(7, 1.0);
    CHECK_THROWS_AS(set_union(a, NodeSet::empty(other)), InvalidInput);
  }

  TEST_CASE("discrete boundary") {
    const Mesh m(10, 1.0);
    NodeSet single = NodeSet::empty(m);
    single.insert(m.node_index(5, 5));
    CHECK(discrete_boundary(single, m) == single);
    CHECK(discrete_boundary(NodeSet::all(m), m).is_empty());
    CHECK(discrete_boundary(NodeSet::empty(m), m).is_empty());
    NodeSet block = NodeSet::empty(m);
    for (int i = 3; i <= 5; ++i)
      for (int j = 3; j <= 5; ++j) block.insert(m.node_index(i, j));
    const NodeSet b = discrete_boundary(block, m);
    CHECK(b.count() == 8);
    CHECK_FALSE(b.contains(m.node_index(4, 4)));
    CHECK(is_subset(b, block));
  }

  TEST_CASE("validate_pair") {
    const Mesh m(16, 1.0);
    const NodeSet big = rasterize(ShapeExpr::disk(0.5, 0.5, 0.2), m);
    const NodeSet small = rasterize(ShapeExpr::disk(0.5, 0.5, 0.1), m);
    CHECK_NOTHROW(validate_pair(m, NodeSet::empty(m), big));
    CHECK_THROWS_AS(validate_pair(m, big, small), IncompatiblePair);
    const ValidatedPair same = validate_pair(m, big, big);
    CHECK(same.free_nodes == 0);
    const ValidatedPair clipped = validate_pair(m, big, small, true);
    CHECK(clipped.E == small);
    CHECK(validate_pair(m, small, NodeSet::all(m)).touches_outer_boundary);
    CHECK_FALSE(validate_pair(m, small, big).touches_outer_boundary);
  }

  TEST_CASE("run-length encoding round trip") {
    const Mesh m(9, 1.0);
    const NodeSet s = rasterize(ShapeExpr::union_of({ShapeExpr::disk(0.3, 0.3, 0.2), ShapeExpr::rect(0.5, 0.1, 0.9, 0.4)}), m, "s");
    CHECK(nodeset_from_rle(nodeset_to_rle(s, m), m) == s);
  }

  TEST_CASE("shape validation") {
    CHECK_THROWS_AS(ShapeExpr::disk(0.5, 0.5, 0.1).validate(0.4), InvalidInput);
    CHECK_NOTHROW(ShapeExpr::disk(0.5, 0.5, 0.1).validate(1.0));
  }
}
