#include <numeric>
#include <random>

#include <doctest.h>

#include "moncap/assembly.hpp"
#include "moncap/properties.hpp"

using namespace moncap;

namespace {

std::vector<double> random_field(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_SUITE("assembly") {
  TEST_CASE("p = 2 stencil") {
    const Mesh m(6, 1.0);
    const Flux lap = Flux::p_laplacian(2.0);
    std::vector<double> u(m.num_nodes(), 0.0);
    const int c = m.node_index(3, 3);
    u[c] = 1.0;
    const auto r = residual(m, lap, u);
    CHECK(r[c] == doctest::Approx(4.0));
    for (auto [i, j] : {std::pair{2, 3}, {4, 3}, {3, 2}, {3, 4}}) CHECK(r[m.node_index(i, j)] == doctest::Approx(-1.0));
    CHECK(std::abs(r[m.node_index(2, 2)]) < 1e-14);
    CHECK(std::abs(r[m.node_index(4, 4)]) < 1e-14);
    CHECK(std::abs(r[m.node_index(2, 4)]) < 1e-14);
  }

  TEST_CASE("residual sums to zero and pairs with the field") {
    const Mesh m(9, 1.0);
    for (const Flux& f : default_flux_family()) {
      const auto u = random_field(m.num_nodes(), 5);
      const auto v = random_field(m.num_nodes(), 6);
      const auto r = residual(m, f, u);
      const double total = std::accumulate(r.begin(), r.end(), 0.0);
      const double scale = std::accumulate(r.begin(), r.end(), 0.0, [](double a, double b) { return a + std::abs(b); });
      INFO(f.describe());
      CHECK(std::abs(total) <= 1e-12 * (1.0 + scale));
      double dot = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) dot += v[k] * r[k];
      CHECK(pairing(m, f, u, v) == doctest::Approx(dot).epsilon(1e-12));
    }
  }

  TEST_CASE("constants lie in the kernel") {
    const Mesh m(5, 1.0);
    const std::vector<double> c(m.num_nodes(), 3.7);
    for (const Flux& f : default_flux_family()) {
      for (double v : residual(m, f, c)) CHECK(v == 0.0);
    }
  }

  TEST_CASE("jacobian_apply matches finite differences") {
    const Mesh m(7, 1.0);
    for (const Flux& f : default_flux_family()) {
      const auto u = random_field(m.num_nodes(), 21);
      const auto w = random_field(m.num_nodes(), 22);
      const double eps = 1e-3, h = 1e-6;
      std::vector<double> up(u), um(u);
      for (std::size_t k = 0; k < u.size(); ++k) {
        up[k] += h * w[k];
        um[k] -= h * w[k];
      }
      const auto rp = regularized_residual(m, f, up, eps);
      const auto rm = regularized_residual(m, f, um, eps);
      const auto jw = jacobian_apply(m, f, u, w, eps);
      double err = 0.0, size = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        err = std::max(err, std::abs((rp[k] - rm[k]) / (2.0 * h) - jw[k]));
        size = std::max(size, std::abs(jw[k]));
      }
      INFO(f.describe());
      CHECK(err <= 1e-5 * (1.0 + size));
    }
  }

  TEST_CASE("assembled Jacobian agrees with jacobian_apply") {
    const Mesh m(6, 1.0);
    const Flux f = Flux::anisotropic_p(3.0, 1.0, 2.0);
    const auto u = random_field(m.num_nodes(), 31);
    std::vector<int> free_index(m.num_nodes(), -1);
    int n_free = 0;
    for (std::size_t k = 0; k < m.num_nodes(); ++k)
      if (!m.on_outer_boundary(k)) free_index[k] = n_free++;
    const auto jac = assemble_jacobian(m, f, u, 1e-4, free_index, n_free);
    const auto w = random_field(m.num_nodes(), 32);
    std::vector<double> wf(m.num_nodes(), 0.0);
    Eigen::VectorXd wv(n_free);
    for (std::size_t k = 0; k < m.num_nodes(); ++k)
      if (free_index[k] >= 0) wv[free_index[k]] = wf[k] = w[k];
    const Eigen::VectorXd jv = jac * wv;
    const auto ref = jacobian_apply(m, f, u, wf, 1e-4);
    for (std::size_t k = 0; k < m.num_nodes(); ++k)
      if (free_index[k] >= 0) CHECK(jv[free_index[k]] == doctest::Approx(ref[k]).epsilon(1e-12));
  }

  TEST_CASE("threaded assembly agrees with the sequential loop") {
    const Mesh m(24, 1.0);
    const Flux f = Flux::weighted_p_laplacian(2.0, WeightSpec{});
    const auto u = random_field(m.num_nodes(), 41);
    const auto seq = residual(m, f, u);
    const auto par = residual(m, f, u, AssemblyOptions{true, 3});
    for (std::size_t k = 0; k < seq.size(); ++k) CHECK(par[k] == doctest::Approx(seq[k]).epsilon(1e-13));
    CHECK(residual(m, f, u) == seq);
  }
}
