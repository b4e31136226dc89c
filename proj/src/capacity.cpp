#include "moncap/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "moncap/assembly.hpp"

namespace moncap {

double NodeMeasure::min_weight() const {
  if (weights.empty()) return 0.0;
  return *std::min_element(weights.begin(), weights.end());
}

SandwichConstants sandwich_constants(const FluxConstants& c, double p, double area_f, double diam_f) {
  const double q = p / (p - 1.0);
  SandwichConstants k;
  k.k1 = std::pow(4.0 * c.c2, p) / (p * std::pow(q * c.c1, p - 1.0));
  const double c2_over = c.c2 / std::pow(c.c1, 1.0 / q);
  k.k2 = 4.0 * c2_over * std::pow(c.b1 * area_f, 1.0 / q) + 4.0 * c.b2 * std::pow(area_f, 1.0 / q);
  k.k3 = std::pow(2.0, p + 1.0) * (c2_over * std::pow(c.b1, 1.0 / q) + c.b2) * std::pow(diam_f, p - 1.0);
  return k;
}

double discrete_area(const Mesh& mesh, const NodeSet& f) {
  std::size_t touched = 0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    if (f.contains(tri[0]) || f.contains(tri[1]) || f.contains(tri[2])) ++touched;
  }
  return static_cast<double>(touched) * mesh.triangle_area();
}

double node_diameter(const Mesh& mesh, const NodeSet& f) {
  // Only the extreme nodes of each grid row can realize the diameter.
  std::vector<Point2> extremes;
  const int np = mesh.cells() + 1;
  for (int j = 0; j < np; ++j) {
    int lo = -1, hi = -1;
    for (int i = 0; i < np; ++i) {
      if (f.contains(mesh.node_index(i, j))) {
        if (lo < 0) lo = i;
        hi = i;
      }
    }
    if (lo < 0) continue;
    extremes.push_back(mesh.node(mesh.node_index(lo, j)));
    if (hi != lo) extremes.push_back(mesh.node(mesh.node_index(hi, j)));
  }
  double d2 = 0.0;
  for (std::size_t a = 0; a < extremes.size(); ++a)
    for (std::size_t b = a + 1; b < extremes.size(); ++b)
      d2 = std::max(d2, (extremes[a] - extremes[b]).squaredNorm());
  return std::sqrt(d2);
}

namespace {

nlohmann::json finite_or_infinity(double v) {
  if (std::isinf(v) && v > 0) return "infinity";
  if (!std::isfinite(v)) return nullptr;
  return v;
}

CapacityReport base_report(const Mesh& mesh, const Flux& flux, const NodeSet& f, double s) {
  CapacityReport rep;
  rep.s = s;
  rep.p = flux.p();
  rep.constants = flux.constants();
  rep.area_f = discrete_area(mesh, f);
  rep.diam_f = node_diameter(mesh, f);
  rep.k = sandwich_constants(rep.constants, rep.p, rep.area_f, rep.diam_f);
  return rep;
}

}  // namespace

nlohmann::json CapacityReport::to_json() const {
  nlohmann::json j;
  j["compatible"] = compatible;
  j["converged"] = converged;
  j["s"] = s;
  j["p"] = p;
  j["capacity"] = finite_or_infinity(compatible ? c_inner : std::numeric_limits<double>::infinity());
  j["c_energy"] = finite_or_infinity(c_energy);
  j["c_inner"] = finite_or_infinity(c_inner);
  j["c_outer"] = finite_or_infinity(c_outer);
  j["c_hat"] = finite_or_infinity(c_hat);
  j["cp_value"] = cp_value ? nlohmann::json(*cp_value) : nlohmann::json(nullptr);
  j["constants"] = {{"c1", constants.c1}, {"c2", constants.c2}, {"b1", constants.b1}, {"b2", constants.b2}};
  j["k1"] = k.k1;
  j["k2"] = k.k2;
  j["k3"] = k.k3;
  j["area_F"] = area_f;
  j["diam_F"] = diam_f;
  j["residual_max"] = residual_max;
  j["tol_res"] = tol_res;
  j["tol_cap"] = tol_cap;
  j["iterations"] = iterations;
  j["free_nodes"] = free_nodes;
  j["constrained_nodes"] = constrained_nodes;
  if (!error.empty()) j["error"] = error;
  return j;
}

CapacityReport evaluate_capacity(const Mesh& mesh, const Flux& flux, const PotentialField& potential,
                                 const NodeSet& e, const NodeSet& f) {
  CapacityReport rep = base_report(mesh, flux, f, potential.s);
  const double s = potential.s;
  const auto r = residual(mesh, flux, potential.u);
  double sum_e = 0.0, sum_out = 0.0;
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
    if (e.contains(k))
      sum_e += r[k];
    else if (!f.contains(k))
      sum_out += r[k];
    else
      ++rep.free_nodes;
  }
  rep.constrained_nodes = mesh.num_nodes() - rep.free_nodes;
  rep.c_energy = pairing(mesh, flux, potential.u, potential.u);
  rep.c_inner = s * sum_e;
  rep.c_outer = -s * sum_out;
  rep.c_hat = s == 0.0 ? 0.0 : sum_e;
  rep.residual_max = free_residual_max(mesh, r, e, f);
  rep.tol_res = potential.tol_res;
  rep.tol_cap = static_cast<double>(rep.constrained_nodes) * potential.tol_res * std::max(1.0, std::abs(s));
  rep.iterations = potential.iterations;
  rep.converged = potential.converged;
  return rep;
}

CapacityResult compute_capacity(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                                double s, const SolverOptions& opts, const CapacityOptions& copts) {
  CapacityResult out;
  std::optional<ValidatedPair> pair;
  try {
    pair = validate_pair(mesh, e, f, copts.clip_e_to_f);
  } catch (const IncompatiblePair& err) {
    CapacityReport rep = base_report(mesh, flux, f, s);
    rep.compatible = false;
    rep.converged = true;
    const double inf = std::numeric_limits<double>::infinity();
    rep.c_energy = rep.c_inner = rep.c_outer = inf;
    rep.c_hat = s == 0.0 ? 0.0 : (s > 0 ? inf : -inf);
    rep.error = err.what();
    out.report = rep;
    return out;
  }

  const NodeSet& e_used = pair->E;
  try {
    out.potential = solve_dirichlet(mesh, flux, e_used, f, s, opts);
  } catch (const SolverDiverged& err) {
    CapacityReport partial = evaluate_capacity(mesh, flux, err.best(), e_used, f);
    partial.error = err.what();
    throw CapacityDiverged(err, std::move(partial));
  }
  out.report = evaluate_capacity(mesh, flux, *out.potential, e_used, f);
  if (copts.with_cp) {
    if (flux.kind() == FluxKind::p_laplacian && s == 1.0)
      out.report.cp_value = out.report.c_inner;
    else
      out.report.cp_value = p_capacity(mesh, flux.p(), e_used, f, opts);
  }
  return out;
}

std::pair<NodeMeasure, NodeMeasure> distributions(const Mesh& mesh, const Flux& flux,
                                                  const PotentialField& potential, const NodeSet& e,
                                                  const NodeSet& f) {
  NodeMeasure lambda{std::vector<double>(mesh.num_nodes(), 0.0), 0.0, e.name()};
  NodeMeasure nu{std::vector<double>(mesh.num_nodes(), 0.0), 0.0, "~" + f.name()};
  if (potential.s == 0.0) return {lambda, nu};
  const auto r = residual(mesh, flux, potential.u);
  const bool positive = potential.s > 0.0;
  if (!positive) std::swap(lambda.carrier, nu.carrier);
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
    if (e.contains(k)) {
      if (positive)
        lambda.weights[k] = r[k];
      else
        nu.weights[k] = -r[k];
    } else if (!f.contains(k)) {
      if (positive)
        nu.weights[k] = -r[k];
      else
        lambda.weights[k] = r[k];
    }
  }
  for (double w : lambda.weights) lambda.total += w;
  for (double w : nu.weights) nu.total += w;
  return {lambda, nu};
}

std::vector<CapacityReport> sweep_s(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                                    const std::vector<double>& s_values, const SolverOptions& opts) {
  if (!std::is_sorted(s_values.begin(), s_values.end()))
    throw InvalidInput("sweep_s: s values must be sorted ascending");
  std::vector<CapacityReport> out;
  std::optional<PotentialField> previous;
  for (double s : s_values) {
    SolverOptions local = opts;
    if (previous && previous->s != 0.0 && (previous->s > 0) == (s > 0)) {
      local.init.kind = InitKind::given;
      local.init.field = previous->u;
      for (double& v : local.init.field) v *= s / previous->s;
    }
    try {
      auto res = compute_capacity(mesh, flux, e, f, s, local);
      out.push_back(res.report);
      previous = std::move(res.potential);
    } catch (const CapacityDiverged& err) {
      out.push_back(err.partial());
      previous.reset();
    }
  }
  return out;
}

double p_capacity(const Mesh& mesh, double p, const NodeSet& e, const NodeSet& f, const SolverOptions& opts) {
  const auto res = compute_capacity(mesh, Flux::p_laplacian(p), e, f, 1.0, opts);
  return res.report.capacity();
}

BoundMargins sandwich_margins(const CapacityReport& rep) {
  if (!rep.cp_value) throw InvalidInput("sandwich_margins: report has no C_p value");
  const double cp = *rep.cp_value;
  const double as = std::abs(rep.s);
  const double asp = std::pow(as, rep.p);
  const double ca = rep.capacity();
  BoundMargins m;
  m.slack = 1e-9 * (1.0 + cp);
  m.lower = ca - (asp * rep.constants.c1 * cp - rep.constants.b1 * rep.area_f);
  m.upper = asp * rep.k.k1 * cp + as * rep.k.k2 * std::pow(cp, 1.0 / rep.p) - ca;
  m.upper_linear = (asp * rep.k.k1 + as * rep.k.k3) * cp - ca;
  return m;
}

}  // namespace moncap
