#ifndef MONCAP_ASSEMBLY_HPP
#define MONCAP_ASSEMBLY_HPP

#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "moncap/flux.hpp"
#include "moncap/mesh.hpp"

namespace moncap {

/// Triangle-loop reduction strategy. The default sequential loop is bitwise
/// reproducible; the threaded loop sums per-chunk partials in chunk order.
struct AssemblyOptions {
  bool parallel = false;
  unsigned workers = 0;  // 0: hardware concurrency
};

/// r_i = sum_T |T| a(x_T, grad u|_T) . grad phi_i|_T (barycenter quadrature).
std::vector<double> residual(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                             const AssemblyOptions& opts = {});

/// Residual of the eps-smoothed flux; eps = 0 reproduces residual().
std::vector<double> regularized_residual(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                                         double eps, const AssemblyOptions& opts = {});

/// <A u, v> = sum_T |T| a(x_T, grad u) . grad v.
double pairing(const Mesh& mesh, const Flux& flux, std::span<const double> u, std::span<const double> v);

/// Directional derivative of the eps-smoothed residual at u along w.
std::vector<double> jacobian_apply(const Mesh& mesh, const Flux& flux, std::span<const double> u,
                                   std::span<const double> w, double eps);

/// Sparse Jacobian of the eps-smoothed residual restricted to free nodes.
/// free_index maps node -> row (or -1 for a constrained node).
Eigen::SparseMatrix<double> assemble_jacobian(const Mesh& mesh, const Flux& flux,
                                              std::span<const double> u, double eps,
                                              std::span<const int> free_index, int n_free);

/// Stiffness matrix of sum_T |T| kappa_T grad u . grad v over free nodes.
Eigen::SparseMatrix<double> assemble_weighted_laplacian(const Mesh& mesh, std::span<const double> kappa,
                                                        std::span<const int> free_index, int n_free);

}  // namespace moncap

#endif  // MONCAP_ASSEMBLY_HPP
