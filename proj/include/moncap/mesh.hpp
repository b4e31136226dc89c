#ifndef MONCAP_MESH_HPP
#define MONCAP_MESH_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moncap/errors.hpp"
#include "moncap/flux.hpp"

namespace moncap {

/// Uniform P1 triangulation of [0, L]^2 with N cells per side. Node (i, j)
/// sits at (iL/N, jL/N) and has index j(N+1) + i. Each cell is cut along its
/// positive-slope diagonal into a lower and an upper right triangle.
class Mesh {
 public:
  Mesh(int cells_per_side, double side_length);

  int cells() const { return n_; }
  double side() const { return l_; }
  double spacing() const { return h_; }
  std::uint64_t id() const { return id_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  int node_index(int i, int j) const { return j * (n_ + 1) + i; }
  const Point2& node(std::size_t k) const { return nodes_[k]; }
  bool on_outer_boundary(std::size_t k) const;

  const std::array<int, 3>& triangle(std::size_t t) const { return triangles_[t]; }
  double triangle_area() const { return area_; }
  const Point2& barycenter(std::size_t t) const { return barycenters_[t]; }
  /// Gradient of the local hat function k (0..2) on triangle t.
  const Vec2& basis_gradient(std::size_t t, int k) const { return grads_[upper_[t]][k]; }
  /// Constant gradient of the P1 field u on triangle t.
  Vec2 gradient(std::size_t t, std::span<const double> u) const;

  /// Triangles incident to node k.
  std::span<const int> node_triangles(std::size_t k) const;

 private:
  int n_;
  double l_;
  double h_;
  double area_;
  std::uint64_t id_;
  std::vector<Point2> nodes_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<std::uint8_t> upper_;
  std::vector<Point2> barycenters_;
  std::array<std::array<Vec2, 3>, 2> grads_;
  std::vector<int> adj_offsets_;
  std::vector<int> adj_triangles_;
};

Mesh build_mesh(int cells_per_side, double side_length = 1.0);

/// A named subset of mesh nodes.
class NodeSet {
 public:
  NodeSet() = default;
  NodeSet(const Mesh& mesh, std::string name);
  NodeSet(std::vector<std::uint8_t> mask, std::string name, std::uint64_t mesh_id);

  static NodeSet empty(const Mesh& mesh, std::string name = "empty");
  static NodeSet all(const Mesh& mesh, std::string name = "all");

  std::size_t size() const { return mask_.size(); }
  bool contains(std::size_t k) const { return mask_[k] != 0; }
  void insert(std::size_t k) { mask_[k] = 1; }
  void erase(std::size_t k) { mask_[k] = 0; }
  std::size_t count() const;
  bool is_empty() const { return count() == 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const std::string& name() const { return name_; }
  void rename(std::string name) { name_ = std::move(name); }
  std::uint64_t mesh_id() const { return mesh_id_; }
  std::vector<int> indices() const;

  friend bool operator==(const NodeSet& a, const NodeSet& b) {
    return a.mesh_id_ == b.mesh_id_ && a.mask_ == b.mask_;
  }

 private:
  std::vector<std::uint8_t> mask_;
  std::string name_;
  std::uint64_t mesh_id_ = 0;
};

NodeSet set_union(const NodeSet& a, const NodeSet& b);
NodeSet set_intersect(const NodeSet& a, const NodeSet& b);
NodeSet set_difference(const NodeSet& a, const NodeSet& b);
NodeSet set_complement(const NodeSet& a);
bool is_subset(const NodeSet& a, const NodeSet& b);
bool set_equal(const NodeSet& a, const NodeSet& b);

enum class SetOp { union_, intersect, difference, subset, equal };
std::variant<NodeSet, bool> set_algebra(SetOp op, const NodeSet& a, const NodeSet& b);

// ---------------------------------------------------------------------------
// Shapes

enum class Axis { x, y };
enum class Side { le, ge };

class ShapeExpr {
 public:
  static ShapeExpr disk(double cx, double cy, double r);
  static ShapeExpr rect(double x0, double y0, double x1, double y1);
  static ShapeExpr halfplane(Axis axis, double threshold, Side side);
  static ShapeExpr all();
  static ShapeExpr none();
  static ShapeExpr union_of(std::vector<ShapeExpr> parts);
  static ShapeExpr intersect_of(std::vector<ShapeExpr> parts);
  static ShapeExpr difference(ShapeExpr a, ShapeExpr b);
  static ShapeExpr complement(ShapeExpr a);

  /// Closed-inequality point test for primitives.
  bool contains(const Point2& x) const;
  /// Throws InvalidInput if a coordinate lies outside [0, L].
  void validate(double L) const;

  nlohmann::json to_json() const;
  static ShapeExpr from_json(const nlohmann::json& j);

  struct Node;

 private:
  explicit ShapeExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

NodeSet rasterize(const ShapeExpr& shape, const Mesh& mesh, std::string name = "shape");

/// Nodes of e that share a triangle with a node outside e.
NodeSet discrete_boundary(const NodeSet& e, const Mesh& mesh);

struct ValidatedPair {
  NodeSet E;
  NodeSet F;
  std::size_t free_nodes = 0;        // |F \ E|
  std::size_t constrained_nodes = 0; // |E| + |F^c|
  bool touches_outer_boundary = false;
};

/// Checks E subset of F (throws IncompatiblePair otherwise). With clip_e_to_f
/// the pair (E intersect F, F) is validated instead.
ValidatedPair validate_pair(const Mesh& mesh, const NodeSet& e, const NodeSet& f,
                            bool clip_e_to_f = false);

/// Run-length encoding of the mask: {"name", "N", "L", "runs": [[start, len], ...]}.
nlohmann::json nodeset_to_rle(const NodeSet& set, const Mesh& mesh);
NodeSet nodeset_from_rle(const nlohmann::json& j, const Mesh& mesh);

}  // namespace moncap

#endif  // MONCAP_MESH_HPP
