#include "moncap/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <nlohmann/json.hpp>

namespace moncap {

double SolverOptions::resolved_tol(double p, double s) const {
  if (tol_res) return *tol_res;
  return 1e-10 * std::max(1.0, std::pow(std::abs(s), p - 1.0));
}

void SolverOptions::validate() const {
  if (tol_res && !(*tol_res > 0.0)) throw InvalidInput("solver: tol_res must be positive");
  if (max_newton < 1) throw InvalidInput("solver: max_newton must be >= 1");
  if (eps_schedule.empty()) throw InvalidInput("solver: eps_schedule must not be empty");
  for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
    if (!(eps_schedule[k] > 0.0)) throw InvalidInput("solver: eps_schedule entries must be positive");
    if (k > 0 && !(eps_schedule[k] < eps_schedule[k - 1]))
      throw InvalidInput("solver: eps_schedule must be strictly decreasing");
  }
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw InvalidInput("solver: backtrack must lie in (0, 1)");
  if (!(min_step > 0.0 && min_step < 1.0)) throw InvalidInput("solver: min_step must lie in (0, 1)");
  if (!(inner_tol > 0.0)) throw InvalidInput("solver: inner_tol must be positive");
}

nlohmann::json SolverOptions::to_json() const {
  nlohmann::json j;
  if (tol_res) j["tol_res"] = *tol_res;
  j["max_newton"] = max_newton;
  j["eps_schedule"] = eps_schedule;
  j["backtrack"] = backtrack;
  j["sufficient_decrease"] = sufficient_decrease;
  j["min_step"] = min_step;
  j["inner_tol"] = inner_tol;
  j["picard_fallback"] = picard_fallback;
  j["extra_polish_steps"] = extra_polish_steps;
  switch (init.kind) {
    case InitKind::zero: j["init"] = "zero"; break;
    case InitKind::linear_blend: j["init"] = "linear_blend"; break;
    case InitKind::given: j["init"] = "given"; break;
    case InitKind::random: j["init"] = {{"random", init.seed}}; break;
  }
  return j;
}

SolverOptions SolverOptions::from_json(const nlohmann::json& j) {
  SolverOptions o;
  if (!j.is_object()) throw InvalidInput("solver: expected an object");
  for (const auto& [key, val] : j.items()) {
    if (key == "tol_res") {
      o.tol_res = val.get<double>();
    } else if (key == "max_newton") {
      o.max_newton = val.get<int>();
    } else if (key == "eps_schedule") {
      o.eps_schedule = val.get<std::vector<double>>();
    } else if (key == "backtrack") {
      o.backtrack = val.get<double>();
    } else if (key == "sufficient_decrease") {
      o.sufficient_decrease = val.get<double>();
    } else if (key == "min_step") {
      o.min_step = val.get<double>();
    } else if (key == "inner_tol") {
      o.inner_tol = val.get<double>();
    } else if (key == "picard_fallback") {
      o.picard_fallback = val.get<bool>();
    } else if (key == "extra_polish_steps") {
      o.extra_polish_steps = val.get<int>();
    } else if (key == "init") {
      if (val.is_string()) {
        const auto s = val.get<std::string>();
        if (s == "zero")
          o.init.kind = InitKind::zero;
        else if (s == "linear_blend")
          o.init.kind = InitKind::linear_blend;
        else
          throw InvalidInput("solver.init: expected zero | linear_blend | {\"random\": seed}");
      } else if (val.is_object() && val.contains("random") && val.size() == 1) {
        o.init.kind = InitKind::random;
        o.init.seed = val.at("random").get<std::uint64_t>();
      } else {
        throw InvalidInput("solver.init: expected zero | linear_blend | {\"random\": seed}");
      }
    } else {
      throw InvalidInput("solver: unknown key '" + key + "'");
    }
  }
  o.validate();
  return o;
}

double free_residual_max(const Mesh& mesh, std::span<const double> r, const NodeSet& e, const NodeSet& f) {
  double m = 0.0;
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k)
    if (f.contains(k) && !e.contains(k)) m = std::max(m, std::abs(r[k]));
  return m;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct LinearSolve {
  Eigen::VectorXd x;
  bool direct = false;
};

LinearSolve solve_linear(const SpMat& a, const Eigen::VectorXd& b, double inner_tol) {
  LinearSolve out;
  if (b.norm() == 0.0) {
    out.x = Eigen::VectorXd::Zero(b.size());
    return out;
  }
  {
    Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> krylov;
    krylov.setTolerance(inner_tol);
    krylov.setMaxIterations(std::max<Eigen::Index>(200, a.rows()));
    krylov.preconditioner().setDroptol(1e-6);
    krylov.preconditioner().setFillfactor(20);
    krylov.compute(a);
    if (krylov.info() == Eigen::Success) {
      out.x = krylov.solve(b);
      if (krylov.info() == Eigen::Success && out.x.allFinite() && krylov.error() <= inner_tol) return out;
    }
  }
  out.direct = true;
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success) {
    out.x = Eigen::VectorXd::Zero(b.size());
    return out;
  }
  out.x = lu.solve(b);
  if (!out.x.allFinite()) out.x = Eigen::VectorXd::Zero(b.size());
  return out;
}

class DirichletProblem {
 public:
  DirichletProblem(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f, double s,
                   const SolverOptions& opts)
      : mesh_(mesh), flux_(flux), e_(e), f_(f), s_(s), opts_(opts), free_index_(mesh.num_nodes(), -1) {
    for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
      if (f.contains(k) && !e.contains(k)) {
        free_index_[k] = static_cast<int>(free_nodes_.size());
        free_nodes_.push_back(static_cast<int>(k));
      }
    }
  }

  int n_free() const { return static_cast<int>(free_nodes_.size()); }

  std::vector<double> constrained_field() const {
    std::vector<double> u(mesh_.num_nodes(), 0.0);
    for (std::size_t k = 0; k < u.size(); ++k)
      if (e_.contains(k)) u[k] = s_;
    return u;
  }

  Eigen::VectorXd free_residual(std::span<const double> u, double eps) const {
    const auto r = regularized_residual(mesh_, flux_, u, eps, opts_.assembly);
    Eigen::VectorXd out(n_free());
    for (int k = 0; k < n_free(); ++k) out[k] = r[free_nodes_[k]];
    return out;
  }

  double true_residual_max(std::span<const double> u) const {
    return free_residual(u, 0.0).lpNorm<Eigen::Infinity>();
  }

  void add_free(std::vector<double>& u, const Eigen::VectorXd& d, double alpha) const {
    for (int k = 0; k < n_free(); ++k) u[free_nodes_[k]] += alpha * d[k];
  }

  /// Harmonic (p = 2) field with the same Dirichlet data.
  std::vector<double> linear_blend(PotentialField& pf) const {
    std::vector<double> u = constrained_field();
    const Flux laplace = Flux::p_laplacian(2.0);
    const SpMat jac = assemble_jacobian(mesh_, laplace, u, 0.0, free_index_, n_free());
    const auto r = residual(mesh_, laplace, u);
    Eigen::VectorXd rhs(n_free());
    for (int k = 0; k < n_free(); ++k) rhs[k] = -r[free_nodes_[k]];
    const auto sol = solve_linear(jac, rhs, opts_.inner_tol);
    pf.direct_fallbacks += sol.direct;
    add_free(u, sol.x, 1.0);
    return u;
  }

  std::vector<double> initial_field(PotentialField& pf) const {
    switch (opts_.init.kind) {
      case InitKind::zero:
        return constrained_field();
      case InitKind::linear_blend:
        return linear_blend(pf);
      case InitKind::given: {
        if (opts_.init.field.size() != mesh_.num_nodes())
          throw InvalidInput("solver: given initial field has the wrong size");
        std::vector<double> u = constrained_field();
        for (int k : free_nodes_) u[k] = opts_.init.field[k];
        return u;
      }
      case InitKind::random: {
        std::vector<double> u = linear_blend(pf);
        std::mt19937_64 rng(opts_.init.seed);
        std::uniform_real_distribution<double> coeff(-1.0, 1.0);
        std::uniform_int_distribution<int> mode(1, 3);
        const double amp = 0.1 * std::abs(s_);
        const double pi_l = std::numbers::pi / mesh_.side();
        for (int m = 0; m < 4; ++m) {
          const double c = amp * coeff(rng) / 4.0;
          const int kx = mode(rng), ky = mode(rng);
          for (int k : free_nodes_) {
            const Point2& x = mesh_.node(k);
            u[k] += c * std::sin(kx * pi_l * x.x()) * std::sin(ky * pi_l * x.y());
          }
        }
        return u;
      }
    }
    return constrained_field();
  }

  enum class Outcome { reached, stalled, budget };

  /// Damped Newton on the residual smoothed with eps_res, linearized with eps_jac.
  Outcome newton(std::vector<double>& u, double eps_res, double eps_jac, double target, int& budget,
                 PotentialField& pf) const {
    Eigen::VectorXd r = free_residual(u, eps_res);
    double norm = r.lpNorm<Eigen::Infinity>();
    while (norm > target) {
      if (budget <= 0) return Outcome::budget;
      const SpMat jac = assemble_jacobian(mesh_, flux_, u, eps_jac, free_index_, n_free());
      const auto sol = solve_linear(jac, -r, opts_.inner_tol);
      pf.direct_fallbacks += sol.direct;
      --budget;
      ++pf.iterations;
      const auto step = line_search(u, r, norm, sol.x, eps_res);
      if (!step) return Outcome::stalled;
      r = step->residual;
      norm = r.lpNorm<Eigen::Infinity>();
      pf.history.push_back({pf.iterations, eps_res, norm, step->alpha});
    }
    return Outcome::reached;
  }

  /// Newton steps past convergence; kept only while the true residual shrinks.
  void extra_polish(std::vector<double>& u, double eps_jac, PotentialField& pf) const {
    for (int k = 0; k < opts_.extra_polish_steps; ++k) {
      const Eigen::VectorXd r = free_residual(u, 0.0);
      const double norm = r.lpNorm<Eigen::Infinity>();
      if (norm == 0.0) return;
      const SpMat jac = assemble_jacobian(mesh_, flux_, u, eps_jac, free_index_, n_free());
      const auto sol = solve_linear(jac, -r, opts_.inner_tol);
      pf.direct_fallbacks += sol.direct;
      std::vector<double> trial = u;
      add_free(trial, sol.x, 1.0);
      const double trial_norm = true_residual_max(trial);
      if (!(trial_norm < norm)) return;
      u = std::move(trial);
      ++pf.iterations;
      pf.history.push_back({pf.iterations, 0.0, trial_norm, 1.0});
    }
  }

  /// Weighted-Laplacian preconditioned fixed-point sweeps on the true residual.
  void picard(std::vector<double>& u, double target, int sweeps, PotentialField& pf) const {
    Eigen::VectorXd r = free_residual(u, 0.0);
    double norm = r.lpNorm<Eigen::Infinity>();
    std::vector<double> kappa(mesh_.num_triangles());
    for (int it = 0; it < sweeps && norm > target; ++it) {
      double kmax = 0.0;
      for (std::size_t t = 0; t < mesh_.num_triangles(); ++t) {
        const Vec2 g = mesh_.gradient(t, u);
        const double gn = g.norm();
        kappa[t] = gn > 0.0 ? flux_.eval(mesh_.barycenter(t), g).norm() / gn : 0.0;
        kmax = std::max(kmax, kappa[t]);
      }
      const double floor = std::max(1e-8 * kmax, 1e-300);
      for (double& k : kappa) k = std::max(k, floor);
      const SpMat lap = assemble_weighted_laplacian(mesh_, kappa, free_index_, n_free());
      const auto sol = solve_linear(lap, -r, opts_.inner_tol);
      pf.direct_fallbacks += sol.direct;
      ++pf.iterations;
      const auto step = line_search(u, r, norm, sol.x, 0.0);
      if (!step) return;
      r = step->residual;
      norm = r.lpNorm<Eigen::Infinity>();
      pf.history.push_back({pf.iterations, 0.0, norm, step->alpha});
    }
  }

  const std::vector<int>& free_nodes() const { return free_nodes_; }

 private:
  struct Step {
    double alpha;
    Eigen::VectorXd residual;
  };

  // Backtracking on the max-norm; an l2 sufficient decrease is also accepted
  // because the max-norm is not differentiable along the Newton direction.
  std::optional<Step> line_search(std::vector<double>& u, const Eigen::VectorXd& r, double norm,
                                  const Eigen::VectorXd& d, double eps) const {
    const double l2 = r.norm();
    double alpha = 1.0;
    std::vector<double> trial(u.size());
    while (alpha >= opts_.min_step) {
      trial = u;
      add_free(trial, d, alpha);
      Eigen::VectorXd rt = free_residual(trial, eps);
      if (rt.allFinite()) {
        const double decrease = 1.0 - opts_.sufficient_decrease * alpha;
        if (rt.lpNorm<Eigen::Infinity>() <= decrease * norm || rt.norm() <= decrease * l2) {
          u = std::move(trial);
          return Step{alpha, std::move(rt)};
        }
      }
      alpha *= opts_.backtrack;
    }
    return std::nullopt;
  }

  const Mesh& mesh_;
  const Flux& flux_;
  const NodeSet& e_;
  const NodeSet& f_;
  double s_;
  const SolverOptions& opts_;
  std::vector<int> free_index_;
  std::vector<int> free_nodes_;
};

}  // namespace

PotentialField solve_dirichlet(const Mesh& mesh, const Flux& flux, const NodeSet& e, const NodeSet& f,
                               double s, const SolverOptions& opts) {
  if (!std::isfinite(s)) throw InvalidInput("solve_dirichlet: s must be finite");
  opts.validate();
  validate_pair(mesh, e, f);

  PotentialField pf;
  pf.s = s;
  pf.e_name = e.name();
  pf.f_name = f.name();
  pf.mesh_id = mesh.id();
  pf.tol_res = opts.resolved_tol(flux.p(), s);

  DirichletProblem problem(mesh, flux, e, f, s, opts);
  if (s == 0.0 || problem.n_free() == 0) {
    pf.u = problem.constrained_field();
    pf.converged = true;
    return pf;
  }

  const double tol = pf.tol_res;
  const double scale = std::max(1.0, std::pow(std::abs(s), flux.p() - 1.0));
  std::vector<double> u = problem.initial_field(pf);
  double res = problem.true_residual_max(u);
  pf.history.push_back({0, 0.0, res, 0.0});
  int budget = opts.max_newton;

  std::vector<double> best = u;
  double best_res = res;
  auto keep_best = [&] {
    res = problem.true_residual_max(u);
    if (res < best_res) {
      best_res = res;
      best = u;
    }
  };

  const double eps_last = opts.eps_schedule.back();
  for (double eps : opts.eps_schedule) {
    if (res <= tol || budget <= 0) break;
    problem.newton(u, eps, eps, std::max(tol, eps * scale), budget, pf);
    keep_best();
  }

  auto polish = [&] {
    if (res > tol && budget > 0) {
      problem.newton(u, 0.0, eps_last, tol, budget, pf);
      keep_best();
    }
  };
  polish();

  if (res > tol && opts.picard_fallback) {
    u = best;
    problem.picard(u, tol, 100, pf);
    keep_best();
    budget = std::max(budget, opts.max_newton / 4);
    polish();
  }

  if (best_res <= tol) {
    u = best;
    problem.extra_polish(u, eps_last, pf);
    keep_best();
  }

  pf.u = best;
  pf.residual_max = best_res;
  pf.converged = best_res <= tol;
  if (!pf.converged) {
    throw SolverDiverged("solver did not reach tol_res=" + std::to_string(tol) +
                             " (best residual " + std::to_string(best_res) + ")",
                         std::move(pf));
  }
  return pf;
}

}  // namespace moncap
