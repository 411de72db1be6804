#include <doctest.h>

#include <cmath>
#include <numeric>

#include "velocity_space.hpp"

using namespace dvb;

TEST_CASE("grid nodes are cell centred and symmetric") {
  auto g = build_grid(8, 6.0);
  CHECK(g.size() == 512);
  CHECK(g.dv == doctest::Approx(1.5));
  CHECK(g.coord(0) == doctest::Approx(-5.25));
  CHECK(g.coord(7) == doctest::Approx(5.25));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& v = g.nodes[i];
    const auto& w = g.nodes[g.size() - 1 - i];
    for (int a = 0; a < 3; ++a) CHECK(v[a] == doctest::Approx(-w[a]));
  }
}

TEST_CASE("renormalized weights carry unit mass and Gaussian moments") {
  auto g = build_grid(16, 6.0);
  CHECK(std::accumulate(g.weights.begin(), g.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  // midpoint rule on a Gaussian is spectrally accurate; dv = 0.75 leaves about 1e-9 in the second moment
  CHECK(bracket(g, [](const Vec3& v) { return v[0] * v[0]; }) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(bracket(g, [](const Vec3& v) { return norm2(v); }) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::abs(bracket(g, [](const Vec3& v) { return v[0] * v[1]; })) < 1e-15);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& v = g.nodes[i];
    CHECK(g.weights[i] == doctest::Approx(maxwellian(v) * g.cell_volume / g.raw_mass).epsilon(1e-12));
  }
}

TEST_CASE("unrenormalized grid keeps the raw quadrature") {
  auto g = build_grid(8, 6.0, false);
  double s = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  CHECK(s == doctest::Approx(g.raw_mass));
  CHECK(s == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("sphere designs are antipodal and exact for quadratics") {
  for (int m : {6, 8, 12, 20, 32}) {
    CAPTURE(m);
    auto s = build_sphere(m);
    REQUIRE(s.size() == static_cast<std::size_t>(m));
    double total = 0;
    double second[3][3] = {};
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(norm2(s.nodes[k]) == doctest::Approx(1.0));
      const auto& a = s.nodes[k];
      const auto& b = s.nodes[s.antipode[k]];
      for (int c = 0; c < 3; ++c) CHECK(a[c] == doctest::Approx(-b[c]));
      total += s.weights[k];
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) second[p][q] += s.weights[k] * a[p] * a[q];
    }
    CHECK(total == doctest::Approx(1.0));
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) CHECK(second[p][q] == doctest::Approx(p == q ? 1.0 / 3 : 0.0).epsilon(1e-12));
  }
  CHECK_THROWS(build_sphere(7));
}

TEST_CASE("post-collision velocities conserve momentum and energy") {
  Vec3 v{1.0, -0.5, 2.0}, vs{-0.3, 0.7, 0.1}, sigma{0.6, 0.0, 0.8};
  auto [vp, vsp] = post_collision(v, vs, sigma);
  for (int a = 0; a < 3; ++a) CHECK(vp[a] + vsp[a] == doctest::Approx(v[a] + vs[a]));
  CHECK(norm2(vp) + norm2(vsp) == doctest::Approx(norm2(v) + norm2(vs)));
  // relative velocity is turned along sigma
  double rel = std::sqrt(norm2({v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]}));
  for (int a = 0; a < 3; ++a) CHECK(vp[a] - vsp[a] == doctest::Approx(rel * sigma[a]));
}
