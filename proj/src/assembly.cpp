#include "moncap/assembly.hpp"

#include <algorithm>
#include <thread>

namespace moncap {

namespace {

void require_field(const Mesh& mesh, std::span<const double> u, const char* what) {
  if (u.size() != mesh.num_nodes())
    throw InvalidInput(std::string(what) + ": field size does not match mesh");
}

// Accumulates contributions of triangles [begin, end) into out.
void accumulate_residual(const Mesh& mesh, const Flux& flux, std::span<const double> u, double eps,
                         std::size_t begin, std::size_t end, std::vector<double>& out) {
  const double area = mesh.triangle_area();
  for (std::size_t t = begin; t < end; ++t) {
    const Vec2 grad = mesh.gradient(t, u);
    const Vec2 a = eps > 0.0 ? flux.eval_regularized(mesh.barycenter(t), grad, eps)
                             : flux.eval(mesh.barycenter(t), grad);
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k) out[tri[k]] += area * a.dot(mesh.basis_gradient(t, k));
  }
}

}  // namespace

std::vector<double> regularized_residual(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                                         double eps, const AssemblyOptions& opts) {
  require_field(mesh, u, "residual");
  std::vector<double> r(mesh.num_nodes(), 0.0);
  const std::size_t nt = mesh.num_triangles();
  if (!opts.parallel) {
    accumulate_residual(mesh, flux, u, eps, 0, nt, r);
    return r;
  }
  unsigned workers = opts.workers ? opts.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, nt));
  std::vector<std::vector<double>> partial(workers, std::vector<double>(mesh.num_nodes(), 0.0));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t begin = nt * w / workers, end = nt * (w + 1) / workers;
      accumulate_residual(mesh, flux, u, eps, begin, end, partial[w]);
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& part : partial)
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += part[k];
  return r;
}

std::vector<double> residual(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                             const AssemblyOptions& opts) {
  return regularized_residual(mesh, flux, u, 0.0, opts);
}

double pairing(const Mesh& mesh, const Flux& flux, std::span<const double> u, std::span<const double> v) {
  require_field(mesh, u, "pairing");
  require_field(mesh, v, "pairing");
  double sum = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 gu = mesh.gradient(t, u);
    const Vec2 gv = mesh.gradient(t, v);
    sum += mesh.triangle_area() * flux.eval(mesh.barycenter(t), gu).dot(gv);
  }
  return sum;
}

std::vector<double> jacobian_apply(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                                   std::span<const double> w, double eps) {
  require_field(mesh, u, "jacobian_apply");
  require_field(mesh, w, "jacobian_apply");
  std::vector<double> out(mesh.num_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 dw = mesh.gradient(t, w);
    if (dw.isZero()) continue;
    const Mat2 jac = flux.jacobian(mesh.barycenter(t), mesh.gradient(t, u), eps);
    const Vec2 da = jac * dw;
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k) out[tri[k]] += mesh.triangle_area() * da.dot(mesh.basis_gradient(t, k));
  }
  return out;
}

Eigen::SparseMatrix<double> assemble_jacobian(const Mesh& mesh, const Flux& flux,
                                              std::span<const double> u, double eps,
                                              std::span<const int> free_index, int n_free) {
  require_field(mesh, u, "assemble_jacobian");
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(9 * mesh.num_triangles());
  const double area = mesh.triangle_area();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    if (free_index[tri[0]] < 0 && free_index[tri[1]] < 0 && free_index[tri[2]] < 0) continue;
    const Mat2 jac = flux.jacobian(mesh.barycenter(t), mesh.gradient(t, u), eps);
    for (int a = 0; a < 3; ++a) {
      const int row = free_index[tri[a]];
      if (row < 0) continue;
      const Vec2& ga = mesh.basis_gradient(t, a);
      for (int b = 0; b < 3; ++b) {
        const int col = free_index[tri[b]];
        if (col < 0) continue;
        entries.emplace_back(row, col, area * ga.dot(jac * mesh.basis_gradient(t, b)));
      }
    }
  }
  Eigen::SparseMatrix<double> jac(n_free, n_free);
  jac.setFromTriplets(entries.begin(), entries.end());
  return jac;
}

Eigen::SparseMatrix<double> assemble_weighted_laplacian(const Mesh& mesh, std::span<const double> kappa,
                                                        std::span<const int> free_index, int n_free) {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(9 * mesh.num_triangles());
  const double area = mesh.triangle_area();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    for (int a = 0; a < 3; ++a) {
      const int row = free_index[tri[a]];
      if (row < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const int col = free_index[tri[b]];
        if (col < 0) continue;
        entries.emplace_back(row, col,
                             area * kappa[t] * mesh.basis_gradient(t, a).dot(mesh.basis_gradient(t, b)));
      }
    }
  }
  Eigen::SparseMatrix<double> lap(n_free, n_free);
  lap.setFromTriplets(entries.begin(), entries.end());
  return lap;
}

}  // namespace moncap
