#include "moncap/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

namespace moncap {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= bytes[k];
    h *= 1099511628211ULL;
  }
  return h;
}

void require_same_mesh(const NodeSet& a, const NodeSet& b) {
  if (a.mesh_id() != b.mesh_id() || a.size() != b.size())
    throw InvalidInput("node sets '" + a.name() + "' and '" + b.name() + "' live on different meshes");
}

}  // namespace

Mesh::Mesh(int cells_per_side, double side_length) : n_(cells_per_side), l_(side_length) {
  if (cells_per_side < 2) throw InvalidInput("mesh requires N >= 2");
  if (!(side_length > 0.0) || !std::isfinite(side_length)) throw InvalidInput("mesh requires L > 0");
  h_ = l_ / n_;
  area_ = 0.5 * h_ * h_;
  id_ = fnv1a(&n_, sizeof(n_));
  id_ = fnv1a(&l_, sizeof(l_), id_);

  const int np = n_ + 1;
  nodes_.reserve(static_cast<std::size_t>(np) * np);
  for (int j = 0; j <= n_; ++j)
    for (int i = 0; i <= n_; ++i) nodes_.emplace_back(i * l_ / n_, j * l_ / n_);

  triangles_.reserve(2 * static_cast<std::size_t>(n_) * n_);
  upper_.reserve(triangles_.capacity());
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < n_; ++i) {
      const int a = node_index(i, j), b = node_index(i + 1, j);
      const int c = node_index(i + 1, j + 1), d = node_index(i, j + 1);
      triangles_.push_back({a, b, c});
      upper_.push_back(0);
      triangles_.push_back({a, c, d});
      upper_.push_back(1);
    }
  }
  barycenters_.reserve(triangles_.size());
  for (const auto& t : triangles_)
    barycenters_.push_back((nodes_[t[0]] + nodes_[t[1]] + nodes_[t[2]]) / 3.0);

  const double g = 1.0 / h_;
  grads_[0] = {Vec2(-g, 0.0), Vec2(g, -g), Vec2(0.0, g)};
  grads_[1] = {Vec2(0.0, -g), Vec2(g, 0.0), Vec2(-g, g)};

  adj_offsets_.assign(nodes_.size() + 1, 0);
  for (const auto& t : triangles_)
    for (int k : t) ++adj_offsets_[k + 1];
  for (std::size_t k = 0; k < nodes_.size(); ++k) adj_offsets_[k + 1] += adj_offsets_[k];
  adj_triangles_.resize(adj_offsets_.back());
  std::vector<int> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (int k : triangles_[t]) adj_triangles_[fill[k]++] = static_cast<int>(t);
}

bool Mesh::on_outer_boundary(std::size_t k) const {
  const int i = static_cast<int>(k) % (n_ + 1);
  const int j = static_cast<int>(k) / (n_ + 1);
  return i == 0 || j == 0 || i == n_ || j == n_;
}

Vec2 Mesh::gradient(std::size_t t, std::span<const double> u) const {
  const auto& tri = triangles_[t];
  const auto& g = grads_[upper_[t]];
  return u[tri[0]] * g[0] + u[tri[1]] * g[1] + u[tri[2]] * g[2];
}

std::span<const int> Mesh::node_triangles(std::size_t k) const {
  return {adj_triangles_.data() + adj_offsets_[k],
          static_cast<std::size_t>(adj_offsets_[k + 1] - adj_offsets_[k])};
}

Mesh build_mesh(int cells_per_side, double side_length) { return Mesh(cells_per_side, side_length); }

// ---------------------------------------------------------------------------
// NodeSet

NodeSet::NodeSet(const Mesh& mesh, std::string name)
    : mask_(mesh.num_nodes(), 0), name_(std::move(name)), mesh_id_(mesh.id()) {}

NodeSet::NodeSet(std::vector<std::uint8_t> mask, std::string name, std::uint64_t mesh_id)
    : mask_(std::move(mask)), name_(std::move(name)), mesh_id_(mesh_id) {}

NodeSet NodeSet::empty(const Mesh& mesh, std::string name) { return NodeSet(mesh, std::move(name)); }

NodeSet NodeSet::all(const Mesh& mesh, std::string name) {
  NodeSet s(mesh, std::move(name));
  std::fill(s.mask_.begin(), s.mask_.end(), 1);
  return s;
}

std::size_t NodeSet::count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1));
}

std::vector<int> NodeSet::indices() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < mask_.size(); ++k)
    if (mask_[k]) out.push_back(static_cast<int>(k));
  return out;
}

namespace {

template <class Op>
NodeSet combine_masks(const NodeSet& a, const NodeSet& b, const std::string& name, Op op) {
  require_same_mesh(a, b);
  std::vector<std::uint8_t> m(a.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = op(a.contains(k), b.contains(k)) ? 1 : 0;
  return NodeSet(std::move(m), name, a.mesh_id());
}

}  // namespace

NodeSet set_union(const NodeSet& a, const NodeSet& b) {
  return combine_masks(a, b, "(" + a.name() + "|" + b.name() + ")", [](bool x, bool y) { return x || y; });
}

NodeSet set_intersect(const NodeSet& a, const NodeSet& b) {
  return combine_masks(a, b, "(" + a.name() + "&" + b.name() + ")", [](bool x, bool y) { return x && y; });
}

NodeSet set_difference(const NodeSet& a, const NodeSet& b) {
  return combine_masks(a, b, "(" + a.name() + "\\" + b.name() + ")", [](bool x, bool y) { return x && !y; });
}

NodeSet set_complement(const NodeSet& a) {
  std::vector<std::uint8_t> m(a.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = a.contains(k) ? 0 : 1;
  return NodeSet(std::move(m), "~" + a.name(), a.mesh_id());
}

bool is_subset(const NodeSet& a, const NodeSet& b) {
  require_same_mesh(a, b);
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.contains(k) && !b.contains(k)) return false;
  return true;
}

bool set_equal(const NodeSet& a, const NodeSet& b) {
  require_same_mesh(a, b);
  return a.mask() == b.mask();
}

std::variant<NodeSet, bool> set_algebra(SetOp op, const NodeSet& a, const NodeSet& b) {
  switch (op) {
    case SetOp::union_: return set_union(a, b);
    case SetOp::intersect: return set_intersect(a, b);
    case SetOp::difference: return set_difference(a, b);
    case SetOp::subset: return is_subset(a, b);
    case SetOp::equal: return set_equal(a, b);
  }
  throw InvalidInput("unknown set operation");
}

// ---------------------------------------------------------------------------
// ShapeExpr

namespace {

struct Disk {
  double cx, cy, r;
};
struct Rect {
  double x0, y0, x1, y1;
};
struct HalfPlane {
  Axis axis;
  double threshold;
  Side side;
};
struct AllShape {};
struct NoShape {};
struct UnionShape {
  std::vector<ShapeExpr> parts;
};
struct IntersectShape {
  std::vector<ShapeExpr> parts;
};
struct DifferenceShape {
  ShapeExpr a, b;
};
struct ComplementShape {
  ShapeExpr a;
};

}  // namespace

struct ShapeExpr::Node {
  std::variant<Disk, Rect, HalfPlane, AllShape, NoShape, UnionShape, IntersectShape, DifferenceShape,
               ComplementShape>
      v;
};

ShapeExpr ShapeExpr::disk(double cx, double cy, double r) {
  if (!(r >= 0.0) || !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(r))
    throw InvalidInput("disk requires finite center and r >= 0");
  return ShapeExpr(std::make_shared<const Node>(Node{Disk{cx, cy, r}}));
}

ShapeExpr ShapeExpr::rect(double x0, double y0, double x1, double y1) {
  if (!(x0 <= x1) || !(y0 <= y1)) throw InvalidInput("rect requires x0 <= x1 and y0 <= y1");
  return ShapeExpr(std::make_shared<const Node>(Node{Rect{x0, y0, x1, y1}}));
}

ShapeExpr ShapeExpr::halfplane(Axis axis, double threshold, Side side) {
  if (!std::isfinite(threshold)) throw InvalidInput("halfplane threshold must be finite");
  return ShapeExpr(std::make_shared<const Node>(Node{HalfPlane{axis, threshold, side}}));
}

ShapeExpr ShapeExpr::all() { return ShapeExpr(std::make_shared<const Node>(Node{AllShape{}})); }
ShapeExpr ShapeExpr::none() { return ShapeExpr(std::make_shared<const Node>(Node{NoShape{}})); }

ShapeExpr ShapeExpr::union_of(std::vector<ShapeExpr> parts) {
  return ShapeExpr(std::make_shared<const Node>(Node{UnionShape{std::move(parts)}}));
}

ShapeExpr ShapeExpr::intersect_of(std::vector<ShapeExpr> parts) {
  return ShapeExpr(std::make_shared<const Node>(Node{IntersectShape{std::move(parts)}}));
}

ShapeExpr ShapeExpr::difference(ShapeExpr a, ShapeExpr b) {
  return ShapeExpr(std::make_shared<const Node>(Node{DifferenceShape{std::move(a), std::move(b)}}));
}

ShapeExpr ShapeExpr::complement(ShapeExpr a) {
  return ShapeExpr(std::make_shared<const Node>(Node{ComplementShape{std::move(a)}}));
}

bool ShapeExpr::contains(const Point2& x) const {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Disk>) {
          const double dx = x.x() - s.cx, dy = x.y() - s.cy;
          return dx * dx + dy * dy <= s.r * s.r;
        } else if constexpr (std::is_same_v<T, Rect>) {
          return s.x0 <= x.x() && x.x() <= s.x1 && s.y0 <= x.y() && x.y() <= s.y1;
        } else if constexpr (std::is_same_v<T, HalfPlane>) {
          const double c = s.axis == Axis::x ? x.x() : x.y();
          return s.side == Side::le ? c <= s.threshold : c >= s.threshold;
        } else if constexpr (std::is_same_v<T, AllShape>) {
          return true;
        } else if constexpr (std::is_same_v<T, NoShape>) {
          return false;
        } else if constexpr (std::is_same_v<T, UnionShape>) {
          return std::any_of(s.parts.begin(), s.parts.end(), [&](const ShapeExpr& e) { return e.contains(x); });
        } else if constexpr (std::is_same_v<T, IntersectShape>) {
          return std::all_of(s.parts.begin(), s.parts.end(), [&](const ShapeExpr& e) { return e.contains(x); });
        } else if constexpr (std::is_same_v<T, DifferenceShape>) {
          return s.a.contains(x) && !s.b.contains(x);
        } else {
          return !s.a.contains(x);
        }
      },
      node_->v);
}

void ShapeExpr::validate(double L) const {
  auto in_box = [L](double c) { return c >= 0.0 && c <= L; };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Disk>) {
          if (!in_box(s.cx) || !in_box(s.cy)) throw InvalidInput("disk center outside [0, L]^2");
        } else if constexpr (std::is_same_v<T, Rect>) {
          if (!in_box(s.x0) || !in_box(s.x1) || !in_box(s.y0) || !in_box(s.y1))
            throw InvalidInput("rect corner outside [0, L]^2");
        } else if constexpr (std::is_same_v<T, HalfPlane>) {
          if (!in_box(s.threshold)) throw InvalidInput("halfplane threshold outside [0, L]");
        } else if constexpr (std::is_same_v<T, UnionShape> || std::is_same_v<T, IntersectShape>) {
          for (const auto& e : s.parts) e.validate(L);
        } else if constexpr (std::is_same_v<T, DifferenceShape>) {
          s.a.validate(L);
          s.b.validate(L);
        } else if constexpr (std::is_same_v<T, ComplementShape>) {
          s.a.validate(L);
        }
      },
      node_->v);
}

nlohmann::json ShapeExpr::to_json() const {
  using nlohmann::json;
  return std::visit(
      [&](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Disk>) {
          return {{"disk", {{"cx", s.cx}, {"cy", s.cy}, {"r", s.r}}}};
        } else if constexpr (std::is_same_v<T, Rect>) {
          return {{"rect", {{"x0", s.x0}, {"y0", s.y0}, {"x1", s.x1}, {"y1", s.y1}}}};
        } else if constexpr (std::is_same_v<T, HalfPlane>) {
          return {{"halfplane",
                   {{"axis", s.axis == Axis::x ? "x" : "y"},
                    {"threshold", s.threshold},
                    {"side", s.side == Side::le ? "le" : "ge"}}}};
        } else if constexpr (std::is_same_v<T, AllShape>) {
          return "all";
        } else if constexpr (std::is_same_v<T, NoShape>) {
          return "none";
        } else if constexpr (std::is_same_v<T, UnionShape> || std::is_same_v<T, IntersectShape>) {
          json parts = json::array();
          for (const auto& e : s.parts) parts.push_back(e.to_json());
          return {{std::is_same_v<T, UnionShape> ? "union" : "intersect", parts}};
        } else if constexpr (std::is_same_v<T, DifferenceShape>) {
          return {{"difference", json::array({s.a.to_json(), s.b.to_json()})}};
        } else {
          return {{"complement", s.a.to_json()}};
        }
      },
      node_->v);
}

namespace {

double shape_number(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key) || !obj.at(key).is_number())
    throw InvalidInput(std::string("shape: missing numeric '") + key + "'");
  return obj.at(key).get<double>();
}

void shape_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InvalidInput("shape: expected an object");
  for (const auto& [key, _] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidInput("shape: unknown key '" + key + "'");
}

}  // namespace

ShapeExpr ShapeExpr::from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "all") return all();
    if (s == "none") return none();
    throw InvalidInput("shape: unknown primitive '" + s + "'");
  }
  if (!j.is_object() || j.size() != 1) throw InvalidInput("shape: expected a single-key object");
  const auto& [key, body] = *j.items().begin();
  if (key == "disk") {
    shape_keys(body, {"cx", "cy", "r"});
    return disk(shape_number(body, "cx"), shape_number(body, "cy"), shape_number(body, "r"));
  }
  if (key == "rect") {
    shape_keys(body, {"x0", "y0", "x1", "y1"});
    return rect(shape_number(body, "x0"), shape_number(body, "y0"), shape_number(body, "x1"),
                shape_number(body, "y1"));
  }
  if (key == "halfplane") {
    shape_keys(body, {"axis", "threshold", "side"});
    const std::string axis = body.value("axis", "x");
    const std::string side = body.value("side", "le");
    if ((axis != "x" && axis != "y") || (side != "le" && side != "ge"))
      throw InvalidInput("halfplane: axis must be x|y and side le|ge");
    return halfplane(axis == "x" ? Axis::x : Axis::y, shape_number(body, "threshold"),
                     side == "le" ? Side::le : Side::ge);
  }
  if (key == "all") return all();
  if (key == "none") return none();
  if (key == "union" || key == "intersect") {
    if (!body.is_array()) throw InvalidInput("shape: '" + key + "' expects an array");
    std::vector<ShapeExpr> parts;
    for (const auto& e : body) parts.push_back(from_json(e));
    return key == "union" ? union_of(std::move(parts)) : intersect_of(std::move(parts));
  }
  if (key == "difference") {
    if (!body.is_array() || body.size() != 2) throw InvalidInput("shape: 'difference' expects [a, b]");
    return difference(from_json(body[0]), from_json(body[1]));
  }
  if (key == "complement") return complement(from_json(body));
  throw InvalidInput("shape: unknown node '" + key + "'");
}

NodeSet rasterize(const ShapeExpr& shape, const Mesh& mesh, std::string name) {
  NodeSet out(mesh, std::move(name));
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k)
    if (shape.contains(mesh.node(k))) out.insert(k);
  return out;
}

NodeSet discrete_boundary(const NodeSet& e, const Mesh& mesh) {
  if (e.size() != mesh.num_nodes() || e.mesh_id() != mesh.id())
    throw InvalidInput("node set does not belong to this mesh");
  NodeSet out(mesh, "boundary(" + e.name() + ")");
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const int inside = e.contains(tri[0]) + e.contains(tri[1]) + e.contains(tri[2]);
    if (inside == 0 || inside == 3) continue;
    for (int k : tri)
      if (e.contains(k)) out.insert(k);
  }
  return out;
}

ValidatedPair validate_pair(const Mesh& mesh, const NodeSet& e, const NodeSet& f, bool clip_e_to_f) {
  if (e.mesh_id() != mesh.id() || f.mesh_id() != mesh.id())
    throw InvalidInput("validate_pair: node sets do not belong to this mesh");
  ValidatedPair pair{clip_e_to_f ? set_intersect(e, f) : e, f};
  if (clip_e_to_f) pair.E.rename(e.name());
  if (!is_subset(pair.E, f))
    throw IncompatiblePair("'" + e.name() + "' is not contained in '" + f.name() + "'");
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
    if (f.contains(k) && !pair.E.contains(k))
      ++pair.free_nodes;
    else
      ++pair.constrained_nodes;
    if (f.contains(k) && mesh.on_outer_boundary(k)) pair.touches_outer_boundary = true;
  }
  return pair;
}

nlohmann::json nodeset_to_rle(const NodeSet& set, const Mesh& mesh) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t k = 0;
  while (k < set.size()) {
    if (!set.contains(k)) {
      ++k;
      continue;
    }
    std::size_t start = k;
    while (k < set.size() && set.contains(k)) ++k;
    runs.push_back({start, k - start});
  }
  return {{"name", set.name()}, {"N", mesh.cells()}, {"L", mesh.side()}, {"runs", runs}};
}

NodeSet nodeset_from_rle(const nlohmann::json& j, const Mesh& mesh) {
  if (j.at("N").get<int>() != mesh.cells() || j.at("L").get<double>() != mesh.side())
    throw InvalidInput("run-length mask was recorded on a different mesh");
  NodeSet out(mesh, j.value("name", "rle"));
  for (const auto& run : j.at("runs")) {
    const auto start = run.at(0).get<std::size_t>();
    const auto len = run.at(1).get<std::size_t>();
    if (start + len > out.size()) throw InvalidInput("run-length mask exceeds mesh size");
    for (std::size_t k = start; k < start + len; ++k) out.insert(k);
  }
  return out;
}

}  // namespace moncap
