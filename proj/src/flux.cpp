#include "moncap/flux.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <variant>

#include <nlohmann/json.hpp>

namespace moncap {

namespace {

// Smallest norm used when a singular formula is evaluated exactly at xi = 0
// with eps = 0; keeps the Jacobian finite.
constexpr double kTinyNorm = 1e-150;

struct PLaplacian {};
struct Weighted {
  WeightSpec weight;
};
struct Anisotropic {
  double alpha;
  double beta;
};
struct Linear {
  Mat2 m;
};
struct FlatCore {
  double rho0;
};
struct STransformed {
  Flux inner;
  double s;
};
struct WeightedSum {
  std::vector<std::pair<Flux, double>> terms;
};

using Params =
    std::variant<PLaplacian, Weighted, Anisotropic, Linear, FlatCore, STransformed, WeightedSum>;

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInput(message);
}

void require_finite(const Vec2& xi) {
  if (!std::isfinite(xi.x()) || !std::isfinite(xi.y()))
    throw InvalidInput("flux evaluated at a non-finite gradient");
}

// g(t) t^{-1} xi and its derivative for isotropic power-type fluxes, where
// t = sqrt(|xi|^2 + eps^2).
Vec2 power_flux(double p, const Vec2& xi, double eps) {
  const double t = std::sqrt(xi.squaredNorm() + eps * eps);
  if (t == 0.0) return Vec2::Zero();
  return std::pow(t, p - 2.0) * xi;
}

Mat2 power_jacobian(double p, const Vec2& xi, double eps) {
  const double t = std::max(std::sqrt(xi.squaredNorm() + eps * eps), kTinyNorm);
  return std::pow(t, p - 2.0) * Mat2::Identity() +
         (p - 2.0) * std::pow(t, p - 4.0) * (xi * xi.transpose());
}

}  // namespace

struct Flux::Node {
  FluxKind kind;
  double p;
  FluxConstants constants;
  Params params;
};

double WeightSpec::operator()(const Point2& x) const {
  const double two_pi_f = 2.0 * std::numbers::pi * freq;
  return w_min + 0.5 * (w_max - w_min) * (1.0 + std::sin(two_pi_f * x.x()) * std::sin(two_pi_f * x.y()));
}

std::string to_string(FluxKind kind) {
  switch (kind) {
    case FluxKind::p_laplacian: return "p_laplacian";
    case FluxKind::weighted_p_laplacian: return "weighted_p_laplacian";
    case FluxKind::anisotropic_p: return "anisotropic_p";
    case FluxKind::linear_matrix: return "linear_matrix";
    case FluxKind::flat_core_p: return "flat_core_p";
    case FluxKind::s_transformed: return "s_transformed";
    case FluxKind::weighted_sum: return "weighted_sum";
  }
  return "unknown";
}

Flux Flux::p_laplacian(double p) {
  require(std::isfinite(p) && p > 1.0, "p_laplacian requires p > 1");
  return Flux(std::make_shared<const Node>(
      Node{FluxKind::p_laplacian, p, FluxConstants{1.0, 1.0, 0.0, 0.0}, PLaplacian{}}));
}

Flux Flux::weighted_p_laplacian(double p, const WeightSpec& weight) {
  require(std::isfinite(p) && p > 1.0, "weighted_p_laplacian requires p > 1");
  require(weight.w_min > 0.0 && weight.w_min <= weight.w_max && std::isfinite(weight.w_max),
          "weight requires 0 < w_min <= w_max");
  require(std::isfinite(weight.freq), "weight frequency must be finite");
  return Flux(std::make_shared<const Node>(
      Node{FluxKind::weighted_p_laplacian, p, FluxConstants{weight.w_min, weight.w_max, 0.0, 0.0},
           Weighted{weight}}));
}

Flux Flux::anisotropic_p(double p, double alpha, double beta) {
  require(std::isfinite(p) && p > 1.0, "anisotropic_p requires p > 1");
  require(alpha > 0.0 && beta > 0.0 && std::isfinite(alpha) && std::isfinite(beta),
          "anisotropic_p requires alpha, beta > 0");
  const double lo = std::min(alpha, beta);
  const double hi = std::max(alpha, beta);
  // (xi^T B xi)^{p/2} >= lo^{p/2}|xi|^p; |B xi| <= sqrt(hi) (xi^T B xi)^{1/2}.
  const FluxConstants c{std::pow(lo, 0.5 * p), std::pow(hi, 0.5 * p), 0.0, 0.0};
  return Flux(std::make_shared<const Node>(
      Node{FluxKind::anisotropic_p, p, c, Anisotropic{alpha, beta}}));
}

Flux Flux::linear_matrix(const Mat2& m) {
  require(m.allFinite(), "linear_matrix requires finite entries");
  const Mat2 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> eig(sym);
  const double lambda_min = eig.eigenvalues().minCoeff();
  require(lambda_min > 0.0, "linear_matrix requires a positive-definite symmetric part");
  Eigen::JacobiSVD<Mat2> svd(m);
  const FluxConstants c{lambda_min, svd.singularValues()(0), 0.0, 0.0};
  return Flux(std::make_shared<const Node>(Node{FluxKind::linear_matrix, 2.0, c, Linear{m}}));
}

Flux Flux::flat_core(double p, double core_radius) {
  require(std::isfinite(p) && p > 1.0, "flat_core requires p > 1");
  require(core_radius >= 0.0 && std::isfinite(core_radius), "flat_core requires rho0 >= 0");
  // |xi| >= 2 rho0 gives |xi| - rho0 >= |xi|/2; below that c1|xi|^p <= 2 rho0^p.
  const FluxConstants c{std::pow(2.0, 1.0 - p), 1.0, 2.0 * std::pow(core_radius, p), 0.0};
  return Flux(std::make_shared<const Node>(
      Node{FluxKind::flat_core_p, p, c, FlatCore{core_radius}}));
}

FluxKind Flux::kind() const { return node_->kind; }
double Flux::p() const { return node_->p; }
const FluxConstants& Flux::constants() const { return node_->constants; }
bool Flux::differentiable() const { return true; }

bool Flux::is_isotropic() const {
  return std::visit(
      [](const auto& prm) -> bool {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, PLaplacian> || std::is_same_v<T, FlatCore>) {
          return true;
        } else if constexpr (std::is_same_v<T, Weighted>) {
          return prm.weight.w_min == prm.weight.w_max;
        } else if constexpr (std::is_same_v<T, Anisotropic>) {
          return prm.alpha == prm.beta;
        } else if constexpr (std::is_same_v<T, Linear>) {
          return prm.m(0, 0) == prm.m(1, 1) && prm.m(0, 1) == 0.0 && prm.m(1, 0) == 0.0;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          return prm.inner.is_isotropic();
        } else {
          return std::all_of(prm.terms.begin(), prm.terms.end(),
                             [](const auto& t) { return t.first.is_isotropic(); });
        }
      },
      node_->params);
}

bool Flux::x_dependent() const {
  return std::visit(
      [](const auto& prm) -> bool {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, Weighted>) {
          return prm.weight.w_min != prm.weight.w_max;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          return prm.inner.x_dependent();
        } else if constexpr (std::is_same_v<T, WeightedSum>) {
          return std::any_of(prm.terms.begin(), prm.terms.end(),
                             [](const auto& t) { return t.first.x_dependent(); });
        } else {
          return false;
        }
      },
      node_->params);
}

bool Flux::symmetric_jacobian() const {
  return std::visit(
      [](const auto& prm) -> bool {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, Linear>) {
          return prm.m(0, 1) == prm.m(1, 0);
        } else if constexpr (std::is_same_v<T, STransformed>) {
          return prm.inner.symmetric_jacobian();
        } else if constexpr (std::is_same_v<T, WeightedSum>) {
          return std::all_of(prm.terms.begin(), prm.terms.end(),
                             [](const auto& t) { return t.first.symmetric_jacobian(); });
        } else {
          return true;
        }
      },
      node_->params);
}

Vec2 Flux::eval(const Point2& x, const Vec2& xi) const {
  require_finite(xi);
  return eval_regularized(x, xi, 0.0);
}

Vec2 Flux::eval_regularized(const Point2& x, const Vec2& xi, double eps) const {
  const double p = node_->p;
  return std::visit(
      [&](const auto& prm) -> Vec2 {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, PLaplacian>) {
          return power_flux(p, xi, eps);
        } else if constexpr (std::is_same_v<T, Weighted>) {
          return prm.weight(x) * power_flux(p, xi, eps);
        } else if constexpr (std::is_same_v<T, Anisotropic>) {
          const Vec2 bxi(prm.alpha * xi.x(), prm.beta * xi.y());
          const double t2 = xi.dot(bxi) + eps * eps;
          if (t2 == 0.0) return Vec2::Zero();
          return std::pow(t2, 0.5 * (p - 2.0)) * bxi;
        } else if constexpr (std::is_same_v<T, Linear>) {
          return prm.m * xi;
        } else if constexpr (std::is_same_v<T, FlatCore>) {
          const double t = std::sqrt(xi.squaredNorm() + eps * eps);
          const double excess = t - prm.rho0;
          Vec2 out = eps * xi;
          if (excess > 0.0) out += (std::pow(excess, p - 1.0) / t) * xi;
          return out;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          return prm.s * prm.inner.eval_regularized(x, prm.s * xi, std::abs(prm.s) * eps);
        } else {
          Vec2 out = Vec2::Zero();
          for (const auto& [f, w] : prm.terms) out += w * f.eval_regularized(x, xi, eps);
          return out;
        }
      },
      node_->params);
}

Mat2 Flux::jacobian(const Point2& x, const Vec2& xi, double eps) const {
  const double p = node_->p;
  return std::visit(
      [&](const auto& prm) -> Mat2 {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, PLaplacian>) {
          return power_jacobian(p, xi, eps);
        } else if constexpr (std::is_same_v<T, Weighted>) {
          return prm.weight(x) * power_jacobian(p, xi, eps);
        } else if constexpr (std::is_same_v<T, Anisotropic>) {
          const Vec2 bxi(prm.alpha * xi.x(), prm.beta * xi.y());
          const double t2 = std::max(xi.dot(bxi) + eps * eps, kTinyNorm * kTinyNorm);
          Mat2 b = Mat2::Zero();
          b(0, 0) = prm.alpha;
          b(1, 1) = prm.beta;
          return std::pow(t2, 0.5 * (p - 2.0)) * b +
                 (p - 2.0) * std::pow(t2, 0.5 * (p - 4.0)) * (bxi * bxi.transpose());
        } else if constexpr (std::is_same_v<T, Linear>) {
          return prm.m;
        } else if constexpr (std::is_same_v<T, FlatCore>) {
          const double t = std::max(std::sqrt(xi.squaredNorm() + eps * eps), kTinyNorm);
          const double excess = t - prm.rho0;
          Mat2 out = eps * Mat2::Identity();
          if (excess > 0.0) {
            const double g = std::pow(excess, p - 1.0);
            const double dg = (p - 1.0) * std::pow(std::max(excess, kTinyNorm), p - 2.0);
            out += (g / t) * Mat2::Identity() + ((dg * t - g) / (t * t * t)) * (xi * xi.transpose());
          }
          return out;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          return prm.s * prm.s * prm.inner.jacobian(x, prm.s * xi, std::abs(prm.s) * eps);
        } else {
          Mat2 out = Mat2::Zero();
          for (const auto& [f, w] : prm.terms) out += w * f.jacobian(x, xi, eps);
          return out;
        }
      },
      node_->params);
}

Vec2 eval_flux(const Flux& flux, const Point2& x, const Vec2& xi) { return flux.eval(x, xi); }

Mat2 flux_jacobian(const Flux& flux, const Point2& x, const Vec2& xi, double eps) {
  return flux.jacobian(x, xi, eps);
}

Flux s_transform(const Flux& flux, double s) {
  require(std::isfinite(s), "s_transform requires finite s");
  require(s != 0.0, "s_transform requires s != 0");
  const double p = flux.p();
  const double sp = std::pow(std::abs(s), p);
  const FluxConstants& c = flux.constants();
  const FluxConstants scaled{sp * c.c1, sp * c.c2, c.b1, std::abs(s) * c.b2};
  return Flux(std::make_shared<const Flux::Node>(
      Flux::Node{FluxKind::s_transformed, p, scaled, STransformed{flux, s}}));
}

Flux combine(const Flux& f1, const Flux& f2, double w1, double w2) {
  require(f1.p() == f2.p(), "combine requires fluxes with the same p");
  require(w1 >= 0.0 && w2 >= 0.0 && std::isfinite(w1) && std::isfinite(w2),
          "combine requires nonnegative weights");
  require(w1 + w2 > 0.0, "combine requires a positive weight");
  const FluxConstants& a = f1.constants();
  const FluxConstants& b = f2.constants();
  // Each term satisfies a_k.xi >= -b1_k, so the larger coercive term survives.
  FluxConstants c;
  c.c1 = std::max(w1 * a.c1, w2 * b.c1);
  c.c2 = w1 * a.c2 + w2 * b.c2;
  c.b1 = w1 * a.b1 + w2 * b.b1;
  c.b2 = w1 * a.b2 + w2 * b.b2;
  WeightedSum sum{{{f1, w1}, {f2, w2}}};
  return Flux(std::make_shared<const Flux::Node>(
      Flux::Node{FluxKind::weighted_sum, f1.p(), c, std::move(sum)}));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) throw InvalidInput(std::string(where) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidInput(std::string(where) + ": unknown key '" + key + "'");
  }
}

double get_number(const json& obj, const char* key, const char* where) {
  if (!obj.contains(key) || !obj.at(key).is_number())
    throw InvalidInput(std::string(where) + ": missing numeric '" + key + "'");
  return obj.at(key).get<double>();
}

double get_number_or(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw InvalidInput(std::string("expected number for '") + key + "'");
  return obj.at(key).get<double>();
}

}  // namespace

nlohmann::json Flux::to_json() const {
  json j;
  j["kind"] = to_string(kind());
  j["p"] = p();
  json params = json::object();
  std::visit(
      [&](const auto& prm) {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, Weighted>) {
          params["w_min"] = prm.weight.w_min;
          params["w_max"] = prm.weight.w_max;
          params["freq"] = prm.weight.freq;
        } else if constexpr (std::is_same_v<T, Anisotropic>) {
          params["alpha"] = prm.alpha;
          params["beta"] = prm.beta;
        } else if constexpr (std::is_same_v<T, Linear>) {
          params["M"] = json::array({json::array({prm.m(0, 0), prm.m(0, 1)}),
                                     json::array({prm.m(1, 0), prm.m(1, 1)})});
        } else if constexpr (std::is_same_v<T, FlatCore>) {
          params["rho0"] = prm.rho0;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          params["s"] = prm.s;
          params["inner"] = prm.inner.to_json();
        } else if constexpr (std::is_same_v<T, WeightedSum>) {
          json comps = json::array();
          for (const auto& [f, w] : prm.terms) comps.push_back({{"weight", w}, {"flux", f.to_json()}});
          params["components"] = comps;
        }
      },
      node_->params);
  j["params"] = params;
  return j;
}

Flux Flux::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"kind", "p", "params"}, "flux");
  if (!j.contains("kind") || !j.at("kind").is_string()) throw InvalidInput("flux: missing 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  const json params = j.contains("params") ? j.at("params") : json::object();
  const double p = get_number_or(j, "p", 2.0);

  if (kind == "p_laplacian") {
    reject_unknown(params, {}, "flux.params");
    return p_laplacian(p);
  }
  if (kind == "weighted_p_laplacian") {
    reject_unknown(params, {"w_min", "w_max", "freq"}, "flux.params");
    WeightSpec w{get_number(params, "w_min", "flux.params"), get_number(params, "w_max", "flux.params"),
                 get_number_or(params, "freq", 1.0)};
    return weighted_p_laplacian(p, w);
  }
  if (kind == "anisotropic_p") {
    reject_unknown(params, {"alpha", "beta"}, "flux.params");
    return anisotropic_p(p, get_number(params, "alpha", "flux.params"),
                         get_number(params, "beta", "flux.params"));
  }
  if (kind == "linear_matrix") {
    reject_unknown(params, {"M"}, "flux.params");
    if (p != 2.0) throw InvalidInput("linear_matrix requires p = 2");
    if (!params.contains("M")) throw InvalidInput("flux.params: missing 'M'");
    const json& mj = params.at("M");
    if (!mj.is_array() || mj.size() != 2 || !mj[0].is_array() || !mj[1].is_array() ||
        mj[0].size() != 2 || mj[1].size() != 2)
      throw InvalidInput("flux.params.M must be a 2x2 nested array");
    Mat2 m;
    m << mj[0][0].get<double>(), mj[0][1].get<double>(), mj[1][0].get<double>(), mj[1][1].get<double>();
    return linear_matrix(m);
  }
  if (kind == "flat_core_p") {
    reject_unknown(params, {"rho0"}, "flux.params");
    return flat_core(p, get_number(params, "rho0", "flux.params"));
  }
  if (kind == "s_transformed") {
    reject_unknown(params, {"s", "inner"}, "flux.params");
    if (!params.contains("inner")) throw InvalidInput("flux.params: missing 'inner'");
    Flux inner = from_json(params.at("inner"));
    if (j.contains("p") && inner.p() != p) throw InvalidInput("s_transformed: p differs from inner flux");
    return s_transform(inner, get_number(params, "s", "flux.params"));
  }
  if (kind == "weighted_sum") {
    reject_unknown(params, {"components"}, "flux.params");
    if (!params.contains("components") || !params.at("components").is_array() ||
        params.at("components").size() != 2)
      throw InvalidInput("weighted_sum requires exactly two components");
    const json& comps = params.at("components");
    for (const auto& c : comps) reject_unknown(c, {"weight", "flux"}, "flux.params.components[]");
    Flux f = combine(from_json(comps[0].at("flux")), from_json(comps[1].at("flux")),
                     get_number(comps[0], "weight", "component"), get_number(comps[1], "weight", "component"));
    if (j.contains("p") && f.p() != p) throw InvalidInput("weighted_sum: p differs from components");
    return f;
  }
  throw InvalidInput("flux: unknown kind '" + kind + "'");
}

std::string Flux::describe() const {
  std::ostringstream os;
  os << to_string(kind()) << "(p=" << p();
  std::visit(
      [&](const auto& prm) {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, Weighted>) {
          os << ", w=[" << prm.weight.w_min << "," << prm.weight.w_max << "]";
        } else if constexpr (std::is_same_v<T, Anisotropic>) {
          os << ", alpha=" << prm.alpha << ", beta=" << prm.beta;
        } else if constexpr (std::is_same_v<T, Linear>) {
          os << ", M=[[" << prm.m(0, 0) << "," << prm.m(0, 1) << "],[" << prm.m(1, 0) << ","
             << prm.m(1, 1) << "]]";
        } else if constexpr (std::is_same_v<T, FlatCore>) {
          os << ", rho0=" << prm.rho0;
        } else if constexpr (std::is_same_v<T, STransformed>) {
          os << ", s=" << prm.s << ", inner=" << prm.inner.describe();
        } else if constexpr (std::is_same_v<T, WeightedSum>) {
          for (const auto& [f, w] : prm.terms) os << ", " << w << "*" << f.describe();
        }
      },
      node_->params);
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Condition checker

namespace {

void record(ConditionResult& r, double margin, double scale, double tol, const Point2& x,
            const Vec2& xi, const Vec2& eta) {
  const double scaled = margin / scale;
  if (scaled < r.worst_scaled_margin) {
    r.worst_scaled_margin = scaled;
    r.worst_margin = margin;
    r.x = x;
    r.xi = xi;
    r.eta = eta;
  }
  if (scaled < -tol) r.passed = false;
}

json condition_json(const ConditionResult& r) {
  return {{"name", r.name},
          {"passed", r.passed},
          {"worst_margin", r.worst_margin},
          {"worst_scaled_margin", r.worst_scaled_margin},
          {"witness",
           {{"x", {r.x.x(), r.x.y()}}, {"xi", {r.xi.x(), r.xi.y()}}, {"eta", {r.eta.x(), r.eta.y()}}}}};
}

}  // namespace

nlohmann::json ConditionReport::to_json() const {
  return {{"samples", samples},
          {"tolerance", tolerance},
          {"all_passed", all_passed()},
          {"conditions",
           json::array({condition_json(zero), condition_json(monotone), condition_json(coercive),
                        condition_json(growth)})}};
}

ConditionReport check_conditions(const FluxFunction& a, double p, const FluxConstants& c,
                                 std::size_t n_samples, double xi_radius, std::uint64_t seed,
                                 double L) {
  require(n_samples >= 1, "check_conditions requires n_samples >= 1");
  require(xi_radius > 0.0, "check_conditions requires xi_radius > 0");
  ConditionReport report;
  report.samples = n_samples;
  report.zero.name = "zero";
  report.monotone.name = "monotone";
  report.coercive.name = "coercive";
  report.growth.name = "growth";
  for (ConditionResult* r : {&report.zero, &report.monotone, &report.coercive, &report.growth})
    r->worst_scaled_margin = std::numeric_limits<double>::infinity();
  const double tol = report.tolerance;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sample_disk = [&]() {
    const double r = xi_radius * std::sqrt(unit(rng));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    return Vec2(r * std::cos(theta), r * std::sin(theta));
  };

  for (std::size_t k = 0; k < n_samples; ++k) {
    const Point2 x(L * unit(rng), L * unit(rng));
    const Vec2 xi = sample_disk();
    const Vec2 eta = sample_disk();
    const double nxi = xi.norm();
    const double scale = 1.0 + std::pow(nxi, p) + std::pow(eta.norm(), p);

    const Vec2 a0 = a(x, Vec2::Zero());
    const Vec2 axi = a(x, xi);
    const Vec2 aeta = a(x, eta);

    record(report.zero, -a0.norm(), 1.0, tol, x, Vec2::Zero(), Vec2::Zero());
    record(report.monotone, (axi - aeta).dot(xi - eta), scale, tol, x, xi, eta);
    record(report.coercive, axi.dot(xi) - (c.c1 * std::pow(nxi, p) - c.b1), scale, tol, x, xi, eta);
    record(report.growth, c.c2 * std::pow(nxi, p - 1.0) + c.b2 - axi.norm(), scale, tol, x, xi, eta);
  }
  return report;
}

ConditionReport check_conditions(const Flux& flux, std::size_t n_samples, double xi_radius,
                                 std::uint64_t seed, double L) {
  return check_conditions([&flux](const Point2& x, const Vec2& xi) { return flux.eval(x, xi); },
                          flux.p(), flux.constants(), n_samples, xi_radius, seed, L);
}

}  // namespace moncap
