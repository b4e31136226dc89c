#include "moncap/properties.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "moncap/assembly.hpp"
#include "moncap/io.hpp"

namespace moncap {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Reports

void SolveAudit::merge(const SolveAudit& o) {
  solves += o.solves;
  converged += o.converged;
  failed += o.failed;
  formula_violations += o.formula_violations;
  worst_formula_ratio = std::max(worst_formula_ratio, o.worst_formula_ratio);
  support_violations += o.support_violations;
  sign_violations += o.sign_violations;
  worst_lambda_scaled = std::min(worst_lambda_scaled, o.worst_lambda_scaled);
  worst_nu_scaled = std::min(worst_nu_scaled, o.worst_nu_scaled);
  bounds_checked += o.bounds_checked;
  bounds_violations += o.bounds_violations;
  worst_bound_scaled = std::min(worst_bound_scaled, o.worst_bound_scaled);
  tight_checked += o.tight_checked;
  tight_violations += o.tight_violations;
}

json SolveAudit::to_json() const {
  return {{"solves", solves},
          {"converged", converged},
          {"failed", failed},
          {"formula_violations", formula_violations},
          {"worst_formula_gap_over_tol_cap", worst_formula_ratio},
          {"support_violations", support_violations},
          {"sign_violations", sign_violations},
          {"worst_lambda_scaled", worst_lambda_scaled},
          {"worst_nu_scaled", worst_nu_scaled},
          {"bounds_checked", bounds_checked},
          {"bounds_violations", bounds_violations},
          {"worst_bound_scaled", bounds_checked ? json(worst_bound_scaled) : json(nullptr)},
          {"tight_checked", tight_checked},
          {"tight_violations", tight_violations},
          {"clean", clean()}};
}

void SuiteReport::tally() {
  instances = records.size();
  violations = 0;
  skipped = 0;
  bool any = false;
  for (const auto& r : records) {
    if (r.skipped) {
      ++skipped;
      continue;
    }
    if (r.margin < -tolerance) ++violations;
    if (!any || r.margin < worst_margin) worst_margin = r.margin;
    any = true;
  }
  if (!any) worst_margin = 0.0;
}

json SuiteReport::to_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    json j{{"index", r.index}, {"config_hash", r.config_hash}, {"flux", r.flux},
           {"values", r.values}, {"skipped", r.skipped}};
    j["margin"] = r.skipped ? json(nullptr) : json(r.margin);
    if (!r.note.empty()) j["note"] = r.note;
    recs.push_back(std::move(j));
  }
  return {{"suite", suite},
          {"passed", passed()},
          {"tolerance", tolerance},
          {"tolerance_rule", tolerance_rule},
          {"instances", instances},
          {"violations", violations},
          {"skipped", skipped},
          {"skip_budget_ok", skip_budget_ok()},
          {"worst_margin", worst_margin},
          {"audit", audit.to_json()},
          {"extra", extra},
          {"records", std::move(recs)}};
}

std::string SuiteReport::summary() const {
  std::ostringstream out;
  out.precision(6);
  out << "suite " << suite << ": " << (passed() ? "PASS" : "FAIL") << " instances=" << instances
      << " violations=" << violations << " skipped=" << skipped << " worst_margin=" << worst_margin
      << " tolerance=" << tolerance;
  if (!extra_passed) out << " (auxiliary checks failed)";
  if (!audit.clean()) out << " (solve audit failed)";
  return out.str();
}

// ---------------------------------------------------------------------------
// Flux family

std::vector<Flux> default_flux_family() {
  Mat2 skew;
  skew << 1.0, 0.5, -0.5, 1.0;
  return {Flux::p_laplacian(1.5),
          Flux::p_laplacian(2.0),
          Flux::p_laplacian(3.0),
          Flux::weighted_p_laplacian(2.0, WeightSpec{1.0, 2.0, 1.0}),
          Flux::anisotropic_p(3.0, 1.0, 2.0),
          Flux::linear_matrix(skew),
          default_flat_core()};
}

Flux default_flat_core() { return Flux::flat_core(3.0, 1.0); }

namespace {

// ---------------------------------------------------------------------------
// Plumbing

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

template <class Body>
void parallel_for(std::size_t n, unsigned jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Named auxiliary check with its own tolerance; margins >= -tol pass.
struct Check {
  std::string name;
  double tolerance = 0.0;
  std::string rule;
  bool informational = false;
  std::size_t count = 0;
  std::size_t violations = 0;
  std::optional<double> worst;

  void add(double margin) {
    ++count;
    if (!worst || margin < *worst) worst = margin;
    if (margin < -tolerance || std::isnan(margin)) ++violations;
  }
  bool passed() const { return informational || violations == 0; }
  json to_json() const {
    return {{"name", name},           {"tolerance", tolerance},   {"rule", rule},
            {"informational", informational}, {"count", count}, {"violations", violations},
            {"worst_margin", worst ? json(*worst) : json(nullptr)}, {"passed", passed()}};
  }
};

class Checks {
 public:
  Check& define(std::string name, double tol, std::string rule, bool informational = false) {
    Check c;
    c.name = std::move(name);
    c.tolerance = tol;
    c.rule = std::move(rule);
    c.informational = informational;
    list_.push_back(std::move(c));
    return list_.back();
  }
  void add(const std::string& name, double margin) {
    for (auto& c : list_)
      if (c.name == name) return c.add(margin);
    throw std::logic_error("undefined check " + name);
  }
  bool passed() const {
    return std::all_of(list_.begin(), list_.end(), [](const Check& c) { return c.passed(); });
  }
  json to_json() const {
    json a = json::array();
    for (const auto& c : list_) a.push_back(c.to_json());
    return a;
  }

 private:
  std::vector<Check> list_;
};

/// Per-instance output, merged in index order.
struct Outcome {
  std::vector<InstanceRecord> records;
  SolveAudit audit;
  std::vector<std::pair<std::string, double>> checks;
};

void merge_outcomes(SuiteReport& rep, std::vector<Outcome>& outcomes, Checks& checks) {
  for (auto& o : outcomes) {
    for (auto& r : o.records) rep.records.push_back(std::move(r));
    rep.audit.merge(o.audit);
    for (const auto& [name, m] : o.checks) checks.add(name, m);
  }
  for (std::size_t k = 0; k < rep.records.size(); ++k) rep.records[k].index = k;
}

void finish(SuiteReport& rep, const Checks& checks) {
  rep.tally();
  rep.extra["checks"] = checks.to_json();
  rep.extra_passed = rep.extra_passed && checks.passed();
}

SolverOptions suite_solver(const SuiteOptions& opts) {
  SolverOptions s = opts.solver;
  s.assembly.parallel = false;
  return s;
}

std::uint64_t mask_hash(const NodeSet& set) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : set.mask()) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SolveOut {
  CapacityReport rep;
  std::vector<double> u;
};

/// Capacity solves with the structural audit applied to each.
class AuditedSolver {
 public:
  AuditedSolver(const Mesh& mesh, const SuiteOptions& opts, SolveAudit& audit)
      : mesh_(mesh), opts_(suite_solver(opts)), bounds_(opts.audit_bounds), audit_(audit) {}

  std::optional<SolveOut> run(const Flux& flux, const NodeSet& e, const NodeSet& f, double s,
                              const SolverOptions* override_opts = nullptr) {
    const SolverOptions& so = override_opts ? *override_opts : opts_;
    CapacityResult res;
    ++audit_.solves;
    try {
      res = compute_capacity(mesh_, flux, e, f, s, so);
    } catch (const SolverDiverged&) {
      ++audit_.failed;
      return std::nullopt;
    }
    ++audit_.converged;
    inspect(flux, *res.potential, e, f, res.report);
    SolveOut out{res.report, std::move(res.potential->u)};

    const bool plain = flux.kind() == FluxKind::p_laplacian;
    if (plain && s == 1.0) cp_cache_[key(flux.p(), e, f)] = out.rep.c_inner;
    if (bounds_) {
      if (auto cp = p_capacity_cached(flux.p(), e, f)) {
        out.rep.cp_value = *cp;
        const BoundMargins m = sandwich_margins(out.rep);
        ++audit_.bounds_checked;
        audit_.worst_bound_scaled =
            std::min(audit_.worst_bound_scaled, std::min({m.lower, m.upper, m.upper_linear}) / (1.0 + *cp));
        if (!m.holds()) ++audit_.bounds_violations;
        if (plain && s == 1.0) {
          ++audit_.tight_checked;
          if (std::abs(out.rep.c_inner - *cp) > 1e-10 * (1.0 + *cp)) ++audit_.tight_violations;
        }
      }
    }
    return out;
  }

  /// Same-grid C_p(E, F), cached per (p, E, F).
  std::optional<double> p_capacity_cached(double p, const NodeSet& e, const NodeSet& f) {
    const auto k = key(p, e, f);
    if (auto it = cp_cache_.find(k); it != cp_cache_.end()) return it->second;
    const Flux plain = Flux::p_laplacian(p);
    std::optional<double> value;
    ++audit_.solves;
    try {
      auto res = compute_capacity(mesh_, plain, e, f, 1.0, opts_);
      ++audit_.converged;
      inspect(plain, *res.potential, e, f, res.report);
      value = res.report.c_inner;
    } catch (const SolverDiverged&) {
      ++audit_.failed;
    }
    cp_cache_[k] = value;
    return value;
  }

  const Mesh& mesh() const { return mesh_; }

 private:
  using Key = std::tuple<double, std::uint64_t, std::uint64_t>;
  static Key key(double p, const NodeSet& e, const NodeSet& f) { return {p, mask_hash(e), mask_hash(f)}; }

  // Three-formula identity, support of the distributions, sign bound.
  void inspect(const Flux& flux, const PotentialField& pot, const NodeSet& e, const NodeSet& f,
               const CapacityReport& rep) {
    const double gap = std::max(std::abs(rep.c_energy - rep.c_inner), std::abs(rep.c_inner - rep.c_outer));
    audit_.worst_formula_ratio = std::max(audit_.worst_formula_ratio, gap / rep.tol_cap);
    if (!(gap <= rep.tol_cap)) ++audit_.formula_violations;

    const auto r = residual(mesh_, flux, pot.u);
    const NodeSet be = discrete_boundary(e, mesh_);
    const NodeSet fc = set_complement(f);
    const NodeSet bfc = discrete_boundary(fc, mesh_);
    bool off_support = false;
    for (std::size_t k = 0; k < mesh_.num_nodes(); ++k) {
      const bool interior_e = e.contains(k) && !be.contains(k);
      const bool interior_fc = fc.contains(k) && !bfc.contains(k);
      if ((interior_e || interior_fc) && std::abs(r[k]) > rep.tol_res) off_support = true;
    }
    if (off_support) ++audit_.support_violations;

    const auto [lambda, nu] = distributions(mesh_, flux, pot, e, f);
    const double scale = 1.0 + std::abs(rep.c_hat);
    const double lam = lambda.min_weight() / scale;
    const double nuv = nu.min_weight() / scale;
    audit_.worst_lambda_scaled = std::min(audit_.worst_lambda_scaled, lam);
    audit_.worst_nu_scaled = std::min(audit_.worst_nu_scaled, nuv);
    if (lam < -1e-8 || nuv < -1e-8) ++audit_.sign_violations;
  }

  const Mesh& mesh_;
  SolverOptions opts_;
  bool bounds_;
  SolveAudit& audit_;
  std::map<Key, std::optional<double>> cp_cache_;
};

// ---------------------------------------------------------------------------
// Shape generator. Coordinates are integers in units of L/16, so nested
// shapes stay nested at node level on grids with N divisible by 16.

constexpr int kUnits = 16;

struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

struct Region {
  ShapeExpr shape = ShapeExpr::none();
  Box bbox;
  Box inner;  // a box contained in the shape
};

class ShapeGen {
 public:
  ShapeGen(std::uint64_t seed, std::uint64_t index, double L) : rng_(mix_seed(seed, index)), unit_(L / kUnits) {}

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin() { return pick(0, 1) == 1; }

  /// F: a rectangle or disk at least one unit from the box edge.
  Region outer() {
    if (coin()) {
      Box b{pick(1, 3), pick(1, 3), pick(13, 15), pick(13, 15)};
      return {rect(b), b, Box{b.x0 + 1, b.y0 + 1, b.x1 - 1, b.y1 - 1}};
    }
    const int cx = pick(7, 9), cy = pick(7, 9);
    const int rmax = std::min({cx - 1, cy - 1, 15 - cx, 15 - cy});
    return disk(cx, cy, pick(5, rmax));
  }

  /// A rectangle or disk inside b.
  Region inside(const Box& b) {
    if (b.width() < 2 || b.height() < 2) return {rect(b), b, b};
    if (coin()) {
      const int x0 = pick(b.x0, b.x1 - 1), y0 = pick(b.y0, b.y1 - 1);
      Box r{x0, y0, pick(x0 + 1, b.x1), pick(y0 + 1, b.y1)};
      return {rect(r), r, r};
    }
    const int r = pick(1, std::min(b.width(), b.height()) / 2);
    return disk(pick(b.x0 + r, b.x1 - r), pick(b.y0 + r, b.y1 - r), r);
  }

  /// A rectangle containing `in` and contained in `out`.
  Region between(const Box& in, const Box& out) {
    Box r{pick(out.x0, in.x0), pick(out.y0, in.y0), pick(in.x1, out.x1), pick(in.y1, out.y1)};
    return {rect(r), r, r};
  }

 private:
  ShapeExpr rect(const Box& b) const {
    return ShapeExpr::rect(b.x0 * unit_, b.y0 * unit_, b.x1 * unit_, b.y1 * unit_);
  }
  Region disk(int cx, int cy, int r) const {
    const int half = static_cast<int>(std::floor(r / std::sqrt(2.0)));
    return {ShapeExpr::disk(cx * unit_, cy * unit_, r * unit_), Box{cx - r, cy - r, cx + r, cy + r},
            Box{cx - half, cy - half, cx + half, cy + half}};
  }

  std::mt19937_64 rng_;
  double unit_;
};

json instance_config(const std::string& suite, std::uint64_t seed, std::size_t index, const Mesh& mesh,
                     const Flux& flux, json shapes) {
  return {{"suite", suite},     {"seed", seed},         {"index", index}, {"N", mesh.cells()},
          {"L", mesh.side()},   {"flux", flux.to_json()}, {"shapes", std::move(shapes)}};
}

InstanceRecord make_record(const json& config, const Flux& flux) {
  InstanceRecord r;
  r.config_hash = config_hash(config);
  r.flux = flux.describe();
  return r;
}

void require_fluxes(const std::vector<Flux>& fluxes) {
  if (fluxes.empty()) throw InvalidInput("suite requires at least one flux");
}

double max_abs(std::initializer_list<double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Order

SuiteReport run_order_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, std::size_t n_instances,
                            std::uint64_t seed, const SuiteOptions& opts) {
  require_fluxes(fluxes);
  SuiteReport rep;
  rep.suite = "order";
  rep.tolerance = 1e-6;
  rep.tolerance_rule = "min(C(E2,F)-C(E1,F), C(E,F1)-C(E,F2)) / (1 + max value) >= -1e-6";
  Checks checks;
  checks.define("empty_E1_margin_equals_C_E2", 0.0, "C(empty,F) = 0 so the E-margin equals C(E2,F)");

  std::vector<Outcome> outcomes(n_instances);
  parallel_for(n_instances, opts.jobs, [&](std::size_t g) {
    Outcome& out = outcomes[g];
    ShapeGen gen(seed, g, mesh.side());
    const Region F = gen.outer();
    const Region E2 = gen.inside(F.inner);
    const Region E1 = g % 10 == 0 ? Region{} : gen.inside(E2.inner);
    const Region F1 = g % 10 == 1 ? F : gen.between(E2.bbox, F.inner);

    const NodeSet Fn = rasterize(F.shape, mesh, "F");
    const NodeSet E2n = set_intersect(rasterize(E2.shape, mesh, "E2"), Fn);
    const NodeSet E1n = set_intersect(rasterize(E1.shape, mesh, "E1"), E2n);
    const NodeSet F1n = set_union(set_intersect(rasterize(F1.shape, mesh, "F1"), Fn), E2n);
    const json shapes{{"F", F.shape.to_json()},
                      {"E1", E1.shape.to_json()},
                      {"E2", E2.shape.to_json()},
                      {"F1", F1.shape.to_json()}};

    AuditedSolver solver(mesh, opts, out.audit);
    for (const auto& flux : fluxes) {
      InstanceRecord rec = make_record(instance_config("order", seed, g, mesh, flux, shapes), flux);
      const auto c_e1 = solver.run(flux, E1n, Fn, 1.0);
      const auto c_e2 = solver.run(flux, E2n, Fn, 1.0);
      std::optional<SolveOut> c_f1;
      const bool same_f = F1n == Fn;
      if (same_f) {
        c_f1 = c_e2;
        rec.note = "F1 = F2: identical configuration, margin 0";
      } else {
        c_f1 = solver.run(flux, E2n, F1n, 1.0);
      }
      if (!c_e1 || !c_e2 || !c_f1) {
        rec.skipped = true;
        rec.note = "solver failure";
        out.records.push_back(std::move(rec));
        continue;
      }
      const double v1 = c_e1->rep.capacity(), v2 = c_e2->rep.capacity(), vf1 = c_f1->rep.capacity();
      const double m_e = v2 - v1;
      const double m_f = vf1 - v2;
      const double scale = 1.0 + max_abs({v1, v2, vf1});
      rec.values = {{"C_E1_F", v1},       {"C_E2_F", v2},         {"C_E2_F1", vf1},
                    {"margin_E", m_e},    {"margin_F", m_f},      {"E1_nodes", E1n.count()},
                    {"E2_nodes", E2n.count()}, {"F_nodes", Fn.count()}, {"F1_nodes", F1n.count()}};
      rec.margin = std::min(m_e, m_f) / scale;
      if (E1n.is_empty()) out.checks.emplace_back("empty_E1_margin_equals_C_E2", -std::abs(m_e - v2));
      out.records.push_back(std::move(rec));
    }
  });
  merge_outcomes(rep, outcomes, checks);
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Subadditivity

namespace {

struct SubaddCase {
  std::size_t flux_index = 0;
  ShapeExpr f = ShapeExpr::none();
  std::vector<ShapeExpr> parts;
  ShapeExpr target = ShapeExpr::none();
};

struct SubaddValue {
  bool ok = false;
  double sum_parts = 0.0;
  double whole = 0.0;
  double max_tol_cap = 0.0;
  std::vector<double> parts;
};

SubaddValue subadd_eval(AuditedSolver& solver, const Flux& flux, const SubaddCase& c) {
  const Mesh& mesh = solver.mesh();
  SubaddValue v;
  const NodeSet Fn = rasterize(c.f, mesh, "F");
  for (const auto& part : c.parts) {
    const auto res = solver.run(flux, set_intersect(rasterize(part, mesh, "Ek"), Fn), Fn, 1.0);
    if (!res) return v;
    v.parts.push_back(res->rep.capacity());
    v.sum_parts += res->rep.capacity();
    v.max_tol_cap = std::max(v.max_tol_cap, res->rep.tol_cap);
  }
  const auto res = solver.run(flux, set_intersect(rasterize(c.target, mesh, "E"), Fn), Fn, 1.0);
  if (!res) return v;
  v.whole = res->rep.capacity();
  v.max_tol_cap = std::max(v.max_tol_cap, res->rep.tol_cap);
  v.ok = true;
  return v;
}

double subadd_margin(const SubaddValue& v) {
  return (v.sum_parts - v.whole) / (1.0 + std::max(std::abs(v.whole), std::abs(v.sum_parts)));
}

}  // namespace

SuiteReport run_subadditivity_suite(const Mesh& mesh, const std::vector<Flux>& fluxes,
                                    std::size_t n_instances, std::uint64_t seed, const SuiteOptions& opts) {
  require_fluxes(fluxes);
  SuiteReport rep;
  rep.suite = "subadditivity";
  rep.tolerance = 1e-3;
  rep.tolerance_rule = "(sum_k C(E_k,F) - C(E,F)) / (1 + max value) >= -1e-3, E inside the union of the E_k";
  Checks checks;
  checks.define("refinement_deficit_not_growing", 0.0,
                "deficit at 2N <= deficit at N + max tol_cap/(1+value) on the five worst instances");

  const std::size_t nf = fluxes.size();
  std::vector<Outcome> outcomes(n_instances);
  std::vector<SubaddCase> cases(n_instances * nf);
  parallel_for(n_instances, opts.jobs, [&](std::size_t g) {
    Outcome& out = outcomes[g];
    ShapeGen gen(seed, g, mesh.side());
    const Region F = gen.outer();
    const Region E1 = gen.inside(F.inner);
    Region E2 = g % 10 == 0 ? E1 : (g % 10 == 1 ? gen.inside(E1.inner) : gen.inside(F.inner));
    std::vector<ShapeExpr> parts{E1.shape, E2.shape};
    std::string note = g % 10 == 0 ? "E1 = E2" : (g % 10 == 1 ? "E2 inside E1" : "pair");
    ShapeExpr target = ShapeExpr::union_of(parts);
    if (g % 3 == 2 && g % 10 > 1) {
      parts.push_back(gen.inside(F.inner).shape);
      const ShapeExpr cover = ShapeExpr::union_of(parts);
      target = ShapeExpr::intersect_of({cover, gen.inside(F.inner).shape});
      if (rasterize(target, mesh).is_empty()) target = cover;
      note = "finite cover by three sets";
    }
    json shapes{{"F", F.shape.to_json()}, {"E", target.to_json()}, {"parts", json::array()}};
    for (const auto& p : parts) shapes["parts"].push_back(p.to_json());

    AuditedSolver solver(mesh, opts, out.audit);
    for (std::size_t j = 0; j < nf; ++j) {
      const Flux& flux = fluxes[j];
      SubaddCase c{j, F.shape, parts, target};
      InstanceRecord rec = make_record(instance_config("subadditivity", seed, g, mesh, flux, shapes), flux);
      rec.note = note;
      const SubaddValue v = subadd_eval(solver, flux, c);
      if (!v.ok) {
        rec.skipped = true;
        rec.note += "; solver failure";
      } else {
        rec.values = {{"parts", v.parts}, {"sum_parts", v.sum_parts}, {"C_E_F", v.whole}};
        rec.margin = subadd_margin(v);
      }
      cases[g * nf + j] = std::move(c);
      out.records.push_back(std::move(rec));
    }
  });
  merge_outcomes(rep, outcomes, checks);

  // Re-run the five worst instances on the doubled grid.
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < rep.records.size(); ++k)
    if (!rep.records[k].skipped) order.push_back(k);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rep.records[a].margin < rep.records[b].margin; });
  if (order.size() > 5) order.resize(5);
  const Mesh fine(2 * mesh.cells(), mesh.side());
  std::vector<Outcome> refined(order.size());
  std::vector<SubaddValue> fine_values(order.size());
  parallel_for(order.size(), opts.jobs, [&](std::size_t i) {
    AuditedSolver solver(fine, opts, refined[i].audit);
    const SubaddCase& c = cases[order[i]];
    fine_values[i] = subadd_eval(solver, fluxes[c.flux_index], c);
  });
  json trend = json::array();
  for (std::size_t i = 0; i < order.size(); ++i) {
    rep.audit.merge(refined[i].audit);
    const auto& rec = rep.records[order[i]];
    const double deficit_n = std::max(0.0, -rec.margin);
    json row{{"index", rec.index}, {"config_hash", rec.config_hash}, {"N", mesh.cells()},
             {"margin_N", rec.margin}, {"N_fine", fine.cells()}};
    if (!fine_values[i].ok) {
      row["note"] = "solver failure at refined grid";
      checks.add("refinement_deficit_not_growing", -std::numeric_limits<double>::infinity());
    } else {
      const SubaddValue& v = fine_values[i];
      const double margin_fine = subadd_margin(v);
      const double deficit_fine = std::max(0.0, -margin_fine);
      const double floor = v.max_tol_cap / (1.0 + std::abs(v.whole));
      row["margin_fine"] = margin_fine;
      row["deficit_N"] = deficit_n;
      row["deficit_fine"] = deficit_fine;
      checks.add("refinement_deficit_not_growing", deficit_n + floor - deficit_fine);
    }
    trend.push_back(std::move(row));
  }
  rep.extra["refinement"] = std::move(trend);
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Bounds

SuiteReport run_bounds_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, std::size_t n_instances,
                             std::uint64_t seed, const SuiteOptions& opts) {
  require_fluxes(fluxes);
  SuiteReport rep;
  rep.suite = "bounds";
  rep.tolerance = 1e-9;
  rep.tolerance_rule = "min(lower, upper, upper_linear) / (1 + C_p) >= -1e-9 for s = 1 and a random s";
  Checks checks;
  checks.define("p_laplacian_lower_tight", 1e-10, "|C_A - C_p| / (1 + C_p) for the p-Laplacian at s = 1");
  checks.define("s_power_law", 1e-8, "|C(s) - |s|^p C_p| / (|s|^p C_p) for the p-Laplacian");

  SuiteOptions local = opts;
  local.audit_bounds = true;
  std::vector<Outcome> outcomes(n_instances);
  parallel_for(n_instances, opts.jobs, [&](std::size_t g) {
    Outcome& out = outcomes[g];
    ShapeGen gen(seed, g, mesh.side());
    const Region F = gen.outer();
    const Region E = gen.inside(F.inner);
    double s = gen.uniform(0.25, 3.0);
    if (gen.coin()) s = -s;
    const NodeSet Fn = rasterize(F.shape, mesh, "F");
    const NodeSet En = set_intersect(rasterize(E.shape, mesh, "E"), Fn);
    const json shapes{{"F", F.shape.to_json()}, {"E", E.shape.to_json()}, {"s", s}};

    AuditedSolver solver(mesh, local, out.audit);
    for (const auto& flux : fluxes) {
      InstanceRecord rec = make_record(instance_config("bounds", seed, g, mesh, flux, shapes), flux);
      const bool plain = flux.kind() == FluxKind::p_laplacian;
      std::vector<double> s_values{1.0, s};
      if (plain && flux.p() == 2.0) s_values.push_back(2.0);
      json per_s = json::array();
      double margin = std::numeric_limits<double>::infinity();
      bool failed = false;
      for (double sv : s_values) {
        const auto res = solver.run(flux, En, Fn, sv);
        if (!res || !res->rep.cp_value) {
          failed = true;
          break;
        }
        const double cp = *res->rep.cp_value;
        const BoundMargins m = sandwich_margins(res->rep);
        margin = std::min(margin, std::min({m.lower, m.upper, m.upper_linear}) / (1.0 + cp));
        per_s.push_back({{"s", sv},
                         {"C_A", res->rep.capacity()},
                         {"C_p", cp},
                         {"lower", m.lower},
                         {"upper", m.upper},
                         {"upper_linear", m.upper_linear},
                         {"k1", res->rep.k.k1},
                         {"k2", res->rep.k.k2},
                         {"k3", res->rep.k.k3}});
        if (plain) {
          const double law = std::pow(std::abs(sv), flux.p()) * cp;
          const double rel = law == 0.0 ? std::abs(res->rep.capacity()) : std::abs(res->rep.capacity() - law) / law;
          if (sv == 1.0) out.checks.emplace_back("p_laplacian_lower_tight", -std::abs(m.lower) / (1.0 + cp));
          out.checks.emplace_back("s_power_law", -rel);
        }
      }
      if (failed) {
        rec.skipped = true;
        rec.note = "solver failure";
      } else {
        rec.values = {{"per_s", per_s}};
        rec.margin = margin;
      }
      out.records.push_back(std::move(rec));
    }
  });
  merge_outcomes(rep, outcomes, checks);
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// s-laws

SuiteReport run_s_suite(const Mesh& mesh, const std::vector<Flux>& fluxes, const SSuiteOptions& sopts,
                        std::uint64_t seed, const SuiteOptions& opts) {
  require_fluxes(fluxes);
  const auto& grid = sopts.s_grid;
  if (grid.size() < 3 || !std::is_sorted(grid.begin(), grid.end()) ||
      std::adjacent_find(grid.begin(), grid.end()) != grid.end())
    throw InvalidInput("s suite: s_grid must be strictly ascending with at least three points");
  if (!(grid.front() < 0.0 && grid.back() > 0.0) || std::find(grid.begin(), grid.end(), 0.0) == grid.end())
    throw InvalidInput("s suite: s_grid must straddle and contain 0");
  std::vector<double> fine;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    fine.push_back(grid[k]);
    if (k + 1 < grid.size()) fine.push_back(0.5 * (grid[k] + grid[k + 1]));
  }

  SuiteReport rep;
  rep.suite = "s";
  rep.tolerance = 1e-6;
  rep.tolerance_rule = "min_k (C_hat(s_k+1) - C_hat(s_k)) / (1 + max |C_hat|) >= -1e-6 on both grids";
  Checks checks;
  checks.define("c_hat_at_zero", 0.0, "C_hat(0) = 0 exactly");
  checks.define("continuity_ratio", 0.0,
                "max adjacent jump on the grid / on the halved grid - ratio >= 0 for p >= 2");
  checks.define("continuity_ratio_p_below_2", 0.0, "same ratio for p < 2, reported only", true);
  checks.define("s_power_law", 1e-8, "|C(s) - |s|^p C_p| / (|s|^p C_p) for the p-Laplacian");
  checks.define("scaling_identity", 1e-8, "|C_A(E,F,s) - C_{A_s}(E,F)| / max of the two");

  const std::size_t nf = fluxes.size();
  const std::size_t n_sweep = sopts.sweep_instances * nf;
  const std::size_t n_total = n_sweep + sopts.identity_instances;
  std::vector<Outcome> outcomes(n_total);
  parallel_for(n_total, opts.jobs, [&](std::size_t t) {
    Outcome& out = outcomes[t];
    AuditedSolver solver(mesh, opts, out.audit);
    if (t < n_sweep) {
      const std::size_t g = t / nf;
      const Flux& flux = fluxes[t % nf];
      ShapeGen gen(seed, g, mesh.side());
      const Region F = gen.outer();
      const Region E = gen.inside(F.inner);
      const NodeSet Fn = rasterize(F.shape, mesh, "F");
      const NodeSet En = set_intersect(rasterize(E.shape, mesh, "E"), Fn);
      json shapes{{"F", F.shape.to_json()}, {"E", E.shape.to_json()}, {"s_grid", grid}};
      InstanceRecord rec = make_record(instance_config("s", seed, g, mesh, flux, shapes), flux);

      auto sweep = [&](const std::vector<double>& s_values, std::vector<double>& c_hat, std::vector<double>& c) {
        for (double s : s_values) {
          const auto res = solver.run(flux, En, Fn, s);
          if (!res) return false;
          c_hat.push_back(res->rep.c_hat);
          c.push_back(res->rep.capacity());
        }
        return true;
      };
      std::vector<double> coarse_hat, coarse_c, fine_hat, fine_c;
      if (!sweep(grid, coarse_hat, coarse_c) || !sweep(fine, fine_hat, fine_c)) {
        rec.skipped = true;
        rec.note = "solver failure";
        out.records.push_back(std::move(rec));
        return;
      }
      auto monotone = [](const std::vector<double>& v) {
        double scale = 1.0;
        for (double x : v) scale = std::max(scale, 1.0 + std::abs(x));
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k + 1 < v.size(); ++k) m = std::min(m, (v[k + 1] - v[k]) / scale);
        return m;
      };
      auto max_jump = [](const std::vector<double>& v) {
        double j = 0.0;
        for (std::size_t k = 0; k + 1 < v.size(); ++k) j = std::max(j, std::abs(v[k + 1] - v[k]));
        return j;
      };
      const double j_coarse = max_jump(coarse_hat), j_fine = max_jump(fine_hat);
      const double ratio = j_fine > 0.0 ? j_coarse / j_fine : std::numeric_limits<double>::infinity();
      const auto zero = std::find(grid.begin(), grid.end(), 0.0) - grid.begin();
      out.checks.emplace_back("c_hat_at_zero", -std::abs(coarse_hat[zero]));
      out.checks.emplace_back(flux.p() >= 2.0 ? "continuity_ratio" : "continuity_ratio_p_below_2",
                              ratio - sopts.continuity_ratio);
      if (flux.kind() == FluxKind::p_laplacian) {
        if (auto cp = solver.p_capacity_cached(flux.p(), En, Fn)) {
          for (std::size_t k = 0; k < grid.size(); ++k) {
            const double law = std::pow(std::abs(grid[k]), flux.p()) * *cp;
            const double rel = law == 0.0 ? std::abs(coarse_c[k]) : std::abs(coarse_c[k] - law) / law;
            out.checks.emplace_back("s_power_law", -rel);
          }
        }
      }
      rec.values = {{"c_hat", coarse_hat},
                    {"c_hat_fine", fine_hat},
                    {"max_jump", j_coarse},
                    {"max_jump_fine", j_fine},
                    {"jump_ratio", std::isfinite(ratio) ? json(ratio) : json(nullptr)}};
      rec.margin = std::min(monotone(coarse_hat), monotone(fine_hat));
      out.records.push_back(std::move(rec));
      return;
    }

    // Scaling identity against the transformed flux.
    const std::size_t i = t - n_sweep;
    const Flux& flux = fluxes[i % nf];
    ShapeGen gen(seed ^ 0x5ca1eULL, i, mesh.side());
    const Region F = gen.outer();
    const Region E = gen.inside(F.inner);
    const NodeSet Fn = rasterize(F.shape, mesh, "F");
    const NodeSet En = set_intersect(rasterize(E.shape, mesh, "E"), Fn);
    for (double s : sopts.identity_s) {
      const auto direct = solver.run(flux, En, Fn, s);
      const auto transformed = solver.run(s_transform(flux, s), En, Fn, 1.0);
      if (!direct || !transformed) {
        out.checks.emplace_back("scaling_identity", -std::numeric_limits<double>::infinity());
        continue;
      }
      const double a = direct->rep.capacity(), b = transformed->rep.capacity();
      const double denom = std::max(std::abs(a), std::abs(b));
      out.checks.emplace_back("scaling_identity", denom == 0.0 ? 0.0 : -std::abs(a - b) / denom);
    }
  });
  merge_outcomes(rep, outcomes, checks);
  rep.extra["s_grid"] = grid;
  rep.extra["s_grid_fine"] = fine;
  rep.extra["identity_s"] = sopts.identity_s;
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Solution invariance

SuiteReport run_invariance_suite(const Mesh& mesh, std::size_t n_instances, std::uint64_t seed,
                                 const SuiteOptions& opts, std::size_t inits) {
  return run_invariance_suite(mesh, default_flat_core(), n_instances, seed, opts, inits);
}

SuiteReport run_invariance_suite(const Mesh& mesh, const Flux& flux, std::size_t n_instances,
                                 std::uint64_t seed, const SuiteOptions& opts, std::size_t inits) {
  if (inits < 2) throw InvalidInput("invariance suite requires at least two initializations");
  SuiteReport rep;
  rep.suite = "invariance";
  rep.tolerance = 1e-6;
  rep.tolerance_rule = "-(max - min capacity over initializations) / (1 + max |capacity|) >= -1e-6";
  Checks checks;
  checks.define("field_spread_above_1e-2", 0.0, "max |u_a - u_b| - 1e-2 for the flat-core flux, reported only",
                true);
  checks.define("control_field_spread", 0.0, "10 tol_res - max |u_a - u_b| for the strictly monotone control");
  checks.define("empty_E_zero", 0.0, "every run returns 0 when E is empty");
  const Flux control = Flux::p_laplacian(2.0);

  std::vector<Outcome> outcomes(n_instances);
  parallel_for(n_instances, opts.jobs, [&](std::size_t g) {
    Outcome& out = outcomes[g];
    ShapeGen gen(seed, g, mesh.side());
    const Region F = gen.outer();
    const Region E = g % 10 == 0 ? Region{} : gen.inside(F.inner);
    const NodeSet Fn = rasterize(F.shape, mesh, "F");
    const NodeSet En = set_intersect(rasterize(E.shape, mesh, "E"), Fn);
    const json shapes{{"F", F.shape.to_json()}, {"E", E.shape.to_json()}, {"inits", inits}};
    AuditedSolver solver(mesh, opts, out.audit);

    struct Runs {
      bool ok = true;
      std::vector<double> values;
      std::vector<std::vector<double>> fields;
      double tol_res = 0.0;
    };
    auto repeat = [&](const Flux& a) {
      Runs r;
      for (std::size_t k = 0; k < inits; ++k) {
        SolverOptions so = suite_solver(opts);
        so.init.kind = InitKind::random;
        so.init.seed = mix_seed(seed, g, k + 1);
        const auto res = solver.run(a, En, Fn, 1.0, &so);
        if (!res) {
          r.ok = false;
          return r;
        }
        r.values.push_back(res->rep.capacity());
        r.fields.push_back(res->u);
        r.tol_res = res->rep.tol_res;
      }
      return r;
    };
    auto field_spread = [](const Runs& r) {
      double d = 0.0;
      for (std::size_t a = 0; a < r.fields.size(); ++a)
        for (std::size_t b = a + 1; b < r.fields.size(); ++b)
          for (std::size_t k = 0; k < r.fields[a].size(); ++k)
            d = std::max(d, std::abs(r.fields[a][k] - r.fields[b][k]));
      return d;
    };

    InstanceRecord rec = make_record(instance_config("invariance", seed, g, mesh, flux, shapes), flux);
    const Runs main = repeat(flux);
    const Runs ctrl = repeat(control);
    if (!main.ok) {
      rec.skipped = true;
      rec.note = "solver failure";
      out.records.push_back(std::move(rec));
      return;
    }
    const auto [lo, hi] = std::minmax_element(main.values.begin(), main.values.end());
    const double spread = *hi - *lo;
    const double scale = 1.0 + std::max(std::abs(*lo), std::abs(*hi));
    const double fspread = field_spread(main);
    rec.values = {{"capacities", main.values}, {"capacity_spread", spread}, {"field_spread", fspread}};
    rec.margin = -spread / scale;
    out.checks.emplace_back("field_spread_above_1e-2", fspread - 1e-2);
    if (ctrl.ok) {
      const double cspread = field_spread(ctrl);
      rec.values["control_field_spread"] = cspread;
      out.checks.emplace_back("control_field_spread", 10.0 * ctrl.tol_res - cspread);
    } else {
      out.checks.emplace_back("control_field_spread", -std::numeric_limits<double>::infinity());
    }
    if (En.is_empty()) out.checks.emplace_back("empty_E_zero", -std::max(std::abs(*lo), std::abs(*hi)));
    out.records.push_back(std::move(rec));
  });
  merge_outcomes(rep, outcomes, checks);
  rep.extra["control_flux"] = control.describe();
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Comparison principle

SuiteReport run_comparison_suite(const Mesh& mesh, const Flux& flux, std::size_t n_instances,
                                 std::uint64_t seed, const SuiteOptions& opts) {
  SuiteReport rep;
  rep.suite = "comparison";
  rep.tolerance = 1e-8;
  rep.tolerance_rule = "min(u(E2,F) - u(E1,F), u(E,F2) - u(E,F1), u, s - u) >= -1e-8 at every node";
  Checks checks;
  std::vector<Outcome> outcomes(n_instances);
  const double s = 1.0;
  parallel_for(n_instances, opts.jobs, [&](std::size_t g) {
    Outcome& out = outcomes[g];
    ShapeGen gen(seed, g, mesh.side());
    const Region F = gen.outer();
    const Region E2 = gen.inside(F.inner);
    const Region E1 = gen.inside(E2.inner);
    const Region F1 = gen.between(E2.bbox, F.inner);
    const NodeSet Fn = rasterize(F.shape, mesh, "F");
    const NodeSet E2n = set_intersect(rasterize(E2.shape, mesh, "E2"), Fn);
    const NodeSet E1n = set_intersect(rasterize(E1.shape, mesh, "E1"), E2n);
    const NodeSet F1n = set_union(set_intersect(rasterize(F1.shape, mesh, "F1"), Fn), E2n);
    const json shapes{{"F", F.shape.to_json()},
                      {"E1", E1.shape.to_json()},
                      {"E2", E2.shape.to_json()},
                      {"F1", F1.shape.to_json()}};
    AuditedSolver solver(mesh, opts, out.audit);
    InstanceRecord rec = make_record(instance_config("comparison", seed, g, mesh, flux, shapes), flux);
    const auto u1 = solver.run(flux, E1n, Fn, s);
    const auto u2 = solver.run(flux, E2n, Fn, s);
    const auto uf1 = solver.run(flux, E2n, F1n, s);
    if (!u1 || !u2 || !uf1) {
      rec.skipped = true;
      rec.note = "solver failure";
      out.records.push_back(std::move(rec));
      return;
    }
    double nested_e = std::numeric_limits<double>::infinity(), nested_f = nested_e, range = nested_e;
    for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
      nested_e = std::min(nested_e, u2->u[k] - u1->u[k]);
      nested_f = std::min(nested_f, u2->u[k] - uf1->u[k]);
      for (const auto* u : {&u1->u, &u2->u, &uf1->u}) range = std::min({range, (*u)[k], s - (*u)[k]});
    }
    rec.values = {{"nested_E_margin", nested_e}, {"nested_F_margin", nested_f}, {"range_margin", range}};
    rec.margin = std::min({nested_e, nested_f, range});
    out.records.push_back(std::move(rec));
  });
  merge_outcomes(rep, outcomes, checks);
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Monotone chains

SuiteReport run_sequence_demo(const Mesh& mesh, const Flux& flux, const std::vector<NodeSet>& chain,
                              const NodeSet& fixed, ChainMode mode, const SuiteOptions& opts) {
  if (chain.empty()) throw InvalidInput("sequence demo requires a non-empty chain");
  const bool increasing = mode == ChainMode::increasing_e || mode == ChainMode::increasing_f;
  const bool e_mode = mode == ChainMode::increasing_e || mode == ChainMode::decreasing_e;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    const bool ok = increasing ? is_subset(chain[k], chain[k + 1]) : is_subset(chain[k + 1], chain[k]);
    if (!ok) throw InvalidInput("sequence demo: chain is not monotone under inclusion");
  }
  for (const auto& set : chain) {
    const bool ok = e_mode ? is_subset(set, fixed) : is_subset(fixed, set);
    if (!ok) throw InvalidInput("sequence demo: chain element incompatible with the fixed set");
  }
  NodeSet limit = chain.front();
  for (const auto& set : chain) limit = increasing ? set_union(limit, set) : set_intersect(limit, set);

  static const char* names[] = {"increasing_E", "decreasing_E", "increasing_F", "decreasing_F"};
  SuiteReport rep;
  rep.suite = "sequence";
  rep.tolerance = 1e-6;
  rep.tolerance_rule = "expected-direction step / (1 + max value) >= -1e-6";
  Checks checks;
  checks.define("limit_attained", 0.0, "-|C(limit set) - C(last element)|");

  std::vector<std::optional<CapacityReport>> values(chain.size() + 1);
  std::vector<SolveAudit> audits(chain.size() + 1);
  parallel_for(chain.size() + 1, opts.jobs, [&](std::size_t k) {
    AuditedSolver solver(mesh, opts, audits[k]);
    const NodeSet& set = k < chain.size() ? chain[k] : limit;
    const auto res = e_mode ? solver.run(flux, set, fixed, 1.0) : solver.run(flux, fixed, set, 1.0);
    if (res) values[k] = res->rep;
  });
  for (const auto& a : audits) rep.audit.merge(a);

  for (std::size_t k = 0; k < chain.size(); ++k) {
    InstanceRecord rec;
    rec.index = k;
    rec.flux = flux.describe();
    rec.config_hash = config_hash({{"suite", "sequence"},
                                   {"mode", names[static_cast<int>(mode)]},
                                   {"flux", flux.to_json()},
                                   {"set", nodeset_to_rle(chain[k], mesh)},
                                   {"fixed", nodeset_to_rle(fixed, mesh)}});
    if (!values[k] || (k > 0 && !values[k - 1])) {
      rec.skipped = true;
      rec.note = "solver failure";
      rep.records.push_back(std::move(rec));
      continue;
    }
    const double c = values[k]->capacity();
    rec.values = {{"capacity", c}, {"nodes", chain[k].count()}};
    if (k == 0) {
      rec.margin = 0.0;
      rec.note = "first element";
    } else {
      const double prev = values[k - 1]->capacity();
      const bool nondecreasing = mode == ChainMode::increasing_e || mode == ChainMode::decreasing_f;
      const double step = nondecreasing ? c - prev : prev - c;
      rec.margin = step / (1.0 + std::max(std::abs(c), std::abs(prev)));
    }
    rep.records.push_back(std::move(rec));
  }
  if (values.back() && values[chain.size() - 1]) {
    const double lim = values.back()->capacity();
    rep.extra["limit_capacity"] = lim;
    checks.add("limit_attained", -std::abs(lim - values[chain.size() - 1]->capacity()));
  } else {
    checks.add("limit_attained", -std::numeric_limits<double>::infinity());
  }
  rep.extra["mode"] = names[static_cast<int>(mode)];
  finish(rep, checks);
  return rep;
}

// ---------------------------------------------------------------------------
// Refinement studies

namespace {

struct GridValue {
  std::optional<CapacityReport> rep;
  SolveAudit audit;
};

GridValue solve_on_grid(int n, double side, const Geometry& geo, const Flux& flux, const SuiteOptions& opts) {
  GridValue out;
  const Mesh mesh(n, side);
  const NodeSet F = rasterize(geo.f, mesh, "F");
  const NodeSet E = set_intersect(rasterize(geo.e, mesh, "E"), F);
  AuditedSolver solver(mesh, opts, out.audit);
  if (auto res = solver.run(flux, E, F, 1.0)) out.rep = res->rep;
  return out;
}

void require_ascending(const std::vector<int>& n_list) {
  if (n_list.empty() || !std::is_sorted(n_list.begin(), n_list.end()) ||
      std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end())
    throw InvalidInput("N_list must be strictly ascending and non-empty");
}

}  // namespace

SuiteReport run_convergence_study(const Geometry& geometry, const Flux& flux, const std::vector<int>& n_list,
                                  double oracle_value, const ConvergenceOptions& copts,
                                  const SuiteOptions& opts) {
  require_ascending(n_list);
  if (!(oracle_value > 0.0) || !std::isfinite(oracle_value))
    throw InvalidInput("convergence study requires a positive finite oracle value");
  SuiteReport rep;
  rep.suite = "convergence";
  rep.tolerance = 0.0;
  rep.tolerance_rule = "rel_tol - relative error at the largest N >= 0";
  Checks checks;
  checks.define("error_trend", 0.0, "allowed increases - number of error increases along N_list");

  std::vector<GridValue> grid(n_list.size());
  parallel_for(n_list.size(), opts.jobs,
               [&](std::size_t i) { grid[i] = solve_on_grid(n_list[i], copts.side, geometry, flux, opts); });

  std::vector<double> errors;
  json table = json::array();
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    rep.audit.merge(grid[i].audit);
    InstanceRecord rec;
    rec.index = i;
    rec.flux = flux.describe();
    rec.config_hash = config_hash({{"suite", "convergence"},
                                   {"geometry", {{"name", geometry.name}, {"E", geometry.e.to_json()},
                                                 {"F", geometry.f.to_json()}}},
                                   {"flux", flux.to_json()},
                                   {"N", n_list[i]},
                                   {"L", copts.side}});
    if (!grid[i].rep) {
      rec.skipped = true;
      rec.note = "solver failure";
      errors.push_back(std::numeric_limits<double>::infinity());
      rep.records.push_back(std::move(rec));
      continue;
    }
    const double c = grid[i].rep->capacity();
    const double err = std::abs(c - oracle_value) / oracle_value;
    errors.push_back(err);
    rec.values = {{"N", n_list[i]}, {"capacity", c}, {"oracle", oracle_value}, {"relative_error", err}};
    const bool last = i + 1 == n_list.size();
    rec.margin = last ? copts.rel_tol - err : 0.0;
    if (!last) rec.note = "trend only";
    table.push_back(rec.values);
    rep.records.push_back(std::move(rec));
  }
  std::size_t increases = 0;
  for (std::size_t i = 1; i < errors.size(); ++i)
    if (errors[i] > errors[i - 1]) ++increases;
  checks.add("error_trend", static_cast<double>(copts.allowed_increases) - static_cast<double>(increases));
  rep.extra["geometry"] = geometry.name;
  rep.extra["table"] = std::move(table);
  rep.extra["error_increases"] = increases;
  rep.extra["allowed_increases"] = copts.allowed_increases;
  rep.extra["rel_tol"] = copts.rel_tol;
  finish(rep, checks);
  return rep;
}

SuiteReport run_flux_gap_study(const Geometry& geometry, const Flux& flux_a, const Flux& flux_b,
                               const std::vector<int>& n_list, const SuiteOptions& opts) {
  require_ascending(n_list);
  SuiteReport rep;
  rep.suite = "flux_gap";
  rep.tolerance = 0.0;
  rep.tolerance_rule = "gap(N_prev) + 1e-10 (1 + C) - gap(N) >= 0";
  Checks checks;

  std::vector<GridValue> a(n_list.size()), b(n_list.size());
  parallel_for(2 * n_list.size(), opts.jobs, [&](std::size_t t) {
    const std::size_t i = t / 2;
    if (t % 2 == 0)
      a[i] = solve_on_grid(n_list[i], 1.0, geometry, flux_a, opts);
    else
      b[i] = solve_on_grid(n_list[i], 1.0, geometry, flux_b, opts);
  });
  double prev_gap = -1.0;  // negative: no previous grid
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    rep.audit.merge(a[i].audit);
    rep.audit.merge(b[i].audit);
    InstanceRecord rec;
    rec.index = i;
    rec.flux = flux_a.describe() + " vs " + flux_b.describe();
    rec.config_hash = config_hash({{"suite", "flux_gap"},
                                   {"geometry", {{"name", geometry.name}, {"E", geometry.e.to_json()},
                                                 {"F", geometry.f.to_json()}}},
                                   {"flux_a", flux_a.to_json()},
                                   {"flux_b", flux_b.to_json()},
                                   {"N", n_list[i]}});
    if (!a[i].rep || !b[i].rep) {
      rec.skipped = true;
      rec.note = "solver failure";
      prev_gap = -1.0;
      rep.records.push_back(std::move(rec));
      continue;
    }
    const double ca = a[i].rep->capacity(), cb = b[i].rep->capacity();
    const double gap = std::abs(ca - cb);
    rec.values = {{"N", n_list[i]}, {"C_a", ca}, {"C_b", cb}, {"gap", gap}};
    rec.margin = (prev_gap < 0.0 ? gap : prev_gap) + 1e-10 * (1.0 + std::max(ca, cb)) - gap;
    prev_gap = gap;
    rep.records.push_back(std::move(rec));
  }
  rep.extra["geometry"] = geometry.name;
  finish(rep, checks);
  return rep;
}

}  // namespace moncap
