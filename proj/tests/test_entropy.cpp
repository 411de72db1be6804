#include <doctest.h>

#include <cmath>
#include <random>

#include "entropy_diagnostics.hpp"
#include "error.hpp"
#include "kernel.hpp"

using namespace dvb;

TEST_CASE("h and r agree with their series and limits") {
  CHECK(h(0.0) == 0.0);
  CHECK(h(-1.0) == doctest::Approx(1.0));
  CHECK(h(1.0) == doctest::Approx(2 * std::log(2.0) - 1));
  for (double z : {1e-3, -2e-3, 5e-3}) {
    const double z2 = z * z, z3 = z2 * z, z4 = z3 * z, z5 = z4 * z;
    CHECK(std::abs(h(z) - (z2 / 2 - z3 / 6 + z4 / 12 - z5 / 20)) < 1e-15);
    CHECK(std::abs(r(z) - (z2 - z3 / 2 + z4 / 3 - z5 / 4)) < 1e-14);
  }
  // tiny arguments must not lose everything to cancellation
  CHECK(h(1e-9) == doctest::Approx(5e-19).epsilon(1e-6));
  CHECK_THROWS_AS(h(-1.5), Error);
  CHECK_THROWS_AS(r(-1.0), Error);
  CHECK(r(-0.5) == doctest::Approx(-0.5 * std::log(0.5)));
}

TEST_CASE("fluctuation, normalization and gamma are consistent") {
  const std::vector<double> G{0.5, 1.0, 1.2, 3.0};
  const double eps = 0.2;
  const auto g = fluctuation(G, eps);
  for (std::size_t i = 0; i < G.size(); ++i) CHECK(1 + eps * g[i] == doctest::Approx(G[i]));
  const auto N = normalization_N(g, eps);
  const auto gm = gamma(g, eps);
  for (std::size_t i = 0; i < G.size(); ++i) {
    CHECK(N[i] == doctest::Approx(1 + eps * g[i] / 3));
    CHECK(std::exp(eps * gm[i] / 3) == doctest::Approx(N[i]));
  }
  // gamma -> g as eps -> 0
  const std::vector<double> gs{0.7, -1.3};
  const auto small = gamma(gs, 1e-7);
  CHECK(small[0] == doctest::Approx(0.7).epsilon(1e-7));
  CHECK(small[1] == doctest::Approx(-1.3).epsilon(1e-7));
  CHECK_THROWS_AS(gamma(std::vector<double>{-40.0}, 0.1), Error);
}

TEST_CASE("entropy functionals on constant profiles") {
  auto phase = make_homogeneous(build_grid(8, 6.0));
  const std::size_t nv = phase.velocity.size();
  CHECK(entropy_H(phase, std::vector<double>(nv, 1.0)) == doctest::Approx(0.0));
  const double eps = 0.1, c = 0.8;
  std::vector<double> G(nv, 1 + eps * c), gref(nv, c);
  CHECK(entropy_H(phase, G) == doctest::Approx(h(eps * c)).epsilon(1e-13));
  CHECK(half_g2(phase, gref) == doctest::Approx(0.5 * c * c).epsilon(1e-13));
  CHECK(entropic_metric(phase, G, eps, gref) == doctest::Approx(std::abs(h(eps * c) / (eps * eps) - 0.5 * c * c)));
  CHECK(l1_gap(phase, G, eps, gref) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> shifted(nv, c + 0.25);
  CHECK(l1_gap(phase, G, eps, shifted) == doctest::Approx(0.25));
  G[3] = -0.1;
  CHECK_THROWS_AS(entropy_H(phase, G), Error);
}

TEST_CASE("entropic metric is second order in the amplitude for odd data") {
  auto phase = make_homogeneous(build_grid(8, 6.0));
  const auto& g = phase.velocity;
  std::vector<double> x(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) x[i] = g.nodes[i][0] * std::exp(-norm2(g.nodes[i]) / 4);
  // <x^3> = 0, so H/eps^2 - <x^2>/2 = eps^2 <x^4>/12 + O(eps^4)
  double x4 = 0;
  for (std::size_t i = 0; i < g.size(); ++i) x4 += g.weights[i] * std::pow(x[i], 4);
  for (double eps : {0.1, 0.05}) {
    std::vector<double> G(g.size());
    for (std::size_t i = 0; i < G.size(); ++i) G[i] = 1 + eps * x[i];
    CHECK(entropic_metric(phase, G, eps, x) == doctest::Approx(eps * eps * x4 / 12).epsilon(0.02));
  }
}

TEST_CASE("dissipation functional and q_gap vanish where they should") {
  auto phase = make_homogeneous(build_grid(6, 5.0));
  CollisionTable T(phase.velocity, build_sphere(6), CollisionKernel::maxwell(1.0));
  const std::size_t nv = phase.velocity.size();
  CHECK(std::abs(dissipation_R(phase, T, std::vector<double>(nv, 1.0))) < 1e-15);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  std::vector<double> g(nv), G(nv);
  for (double& v : g) v = d(rng);
  const double eps = 1e-4;
  for (std::size_t i = 0; i < nv; ++i) G[i] = 1 + eps * g[i];
  // R(1 + eps g)/eps^2 -> 1/4 <<q(g)^2>>
  CHECK(dissipation_R(phase, T, G) / (eps * eps) == doctest::Approx(T.quadratic_form(g, g)).epsilon(1e-3));
  const double qg = q_gap(phase, T, G, eps, g);
  std::vector<double> G2(nv);
  for (std::size_t i = 0; i < nv; ++i) G2[i] = 1 + 2 * eps * g[i];
  CHECK(qg < q_gap(phase, T, G2, 2 * eps, g));
}
