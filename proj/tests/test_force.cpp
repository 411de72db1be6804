#include <doctest.h>

#include <cmath>

#include "collision.hpp"
#include "force_field.hpp"
#include "force_step.hpp"
#include "kernel.hpp"

using namespace dvb;

namespace {

Vec3 rotate(const Vec3& v, const Vec3& axis, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 kxv = cross(axis, v);
  const double kv = dot(axis, v);
  Vec3 out;
  for (int a = 0; a < 3; ++a) out[a] = v[a] * c + kxv[a] * s + axis[a] * kv * (1 - c);
  return out;
}

ForceField custom(const char* F, const char* div) { return ForceField::custom(Expr::parse(F), Expr::parse(div)); }

}  // namespace

TEST_CASE("magnetic force is v x B") {
  auto f = ForceField::magnetic(Vec3{0, 0, 1});
  const Vec3 F = f.evaluate(0, {}, {1, 0, 0});
  CHECK(F[0] == doctest::Approx(0.0));
  CHECK(F[1] == doctest::Approx(-1.0));
  CHECK(F[2] == doctest::Approx(0.0));
  CHECK(f.uniform());
  auto g = ForceField::magnetic(Expr::parse("[0, 0, 1 + 0.5 * cos(2 * pi * x1)]"));
  CHECK_FALSE(g.uniform());
  CHECK(g.magnetic_field(0, {0.5, 0, 0})[2] == doctest::Approx(0.5));
}

TEST_CASE("validators accept magnetic fields at machine precision") {
  auto grid = build_grid(16, 6.0);
  const auto samples = sample_lattice(5, 9, 1.0);
  auto rep = validate(ForceField::magnetic(Vec3{0, 0, 1}), grid, samples);
  CHECK(rep.admissible());
  CHECK(rep.max_orthogonality == 0.0);
  CHECK(rep.max_divergence == 0.0);
  CHECK(rep.max_square_norm == doctest::Approx(2.0).epsilon(1e-6));  // <v1^2 + v2^2>
  CHECK(rep.failure().empty());
  // written out as a custom field, still exact
  auto c = validate(custom("cross(v, [0, 0, 1])", "0"), grid, samples);
  CHECK(c.admissible());
  CHECK(c.max_orthogonality <= kAdmissibilityTol);
}

TEST_CASE("validators reject each violated condition") {
  auto grid = build_grid(8, 6.0);
  const auto samples = sample_lattice(3, 1, 1.0);
  auto push = validate(custom("[1, 0, 0]", "0"), grid, samples);
  CHECK_FALSE(push.orthogonal);
  CHECK(push.divergence_free);
  CHECK(push.failure().find("F.v = 0") != std::string::npos);

  auto swirl = validate(custom("v1 * [v2, -v1, 0]", "v2"), grid, samples);
  CHECK(swirl.orthogonal);
  CHECK_FALSE(swirl.divergence_free);
  CHECK(swirl.failure().find("div_v F") != std::string::npos);

  auto wild = validate(custom("exp(norm2(v)) * [v2, -v1, 0]", "0"), grid, samples);
  CHECK(wild.max_square_norm > 1e6);
  CHECK_FALSE(wild.square_integrable);
  CHECK_FALSE(wild.admissible());

  auto declared = custom("cross(v, [0, 0, 1])", "0");
  declared.declared.orthogonal = false;
  CHECK_FALSE(validate(declared, grid, samples).admissible());
}

TEST_CASE("equilibrium residual vanishes for a magnetic field") {
  auto grid = build_grid(8, 6.0);
  CollisionTable T(grid, build_sphere(6), CollisionKernel::maxwell(1.0));
  CHECK(equilibrium_residual(ForceField::magnetic(Vec3{0.3, -0.2, 1}), T, sample_lattice(3, 1, 1.0)) < 1e-14);
}

TEST_CASE("rotation stencil pulls back along the right-handed rotation") {
  auto grid = build_grid(12, 6.0);
  ForcePropagator P(grid, ForceField::magnetic(Vec3{0, 0, 1}));
  const Vec3 axis{0.0, 0.6, 0.8};
  const double theta = 0.3;
  const auto st = P.rotation_stencil({axis[0] * theta, axis[1] * theta, axis[2] * theta});
  int checked = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3 foot = rotate(grid.nodes[i], axis, theta);
    bool inside = true;
    Vec3 acc{0, 0, 0};
    for (int s = 0; s < 64; ++s) {
      const int node = st->node[64 * i + s];
      if (node < 0) {
        inside = inside && st->weight[64 * i + s] == 0.0;
        continue;
      }
      for (int a = 0; a < 3; ++a) acc[a] += st->weight[64 * i + s] * grid.nodes[node][a];
    }
    if (!inside || norm2(foot) > 16) continue;
    // cubic stencils reproduce linear functions exactly
    for (int a = 0; a < 3; ++a) CHECK(acc[a] == doctest::Approx(foot[a]).epsilon(1e-12).scale(1));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("magnetic step rotates momentum as dm/dt = m x B and keeps mass, energy, entropy") {
  auto grid = build_grid(16, 6.0);
  ForcePropagator P(grid, ForceField::magnetic(Vec3{0, 0, 1}));
  std::vector<double> G(grid.size());
  for (std::size_t i = 0; i < G.size(); ++i) {
    const Vec3& v = grid.nodes[i];
    G[i] = 1 + 0.2 * (v[0] + 0.3 * v[1] * v[2]) * std::exp(-norm2(v) / 4);
  }
  auto moments = [&](const std::vector<double>& x, double out[6]) {
    for (int a = 0; a < 6; ++a) out[a] = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Vec3& v = grid.nodes[i];
      const double w = grid.weights[i];
      out[0] += w * x[i];
      for (int a = 0; a < 3; ++a) out[1 + a] += w * v[a] * x[i];
      out[4] += w * norm2(v) * x[i];
      out[5] += w * (x[i] * std::log(x[i]) - x[i] + 1);
    }
  };
  double m0[6], m1[6];
  moments(G, m0);
  const double tau = 0.1;
  auto H = G;
  P.apply(H, 0.0, {}, tau);
  moments(H, m1);
  CHECK(m1[0] == doctest::Approx(m0[0]).epsilon(1e-14));
  CHECK(m1[4] == doctest::Approx(m0[4]).epsilon(1e-14));
  CHECK(m1[1] == doctest::Approx(m0[1] * std::cos(tau) + m0[2] * std::sin(tau)).epsilon(1e-12));
  CHECK(m1[2] == doctest::Approx(m0[2] * std::cos(tau) - m0[1] * std::sin(tau)).epsilon(1e-12));
  CHECK(m1[2] < 0);
  CHECK(m1[5] == doctest::Approx(m0[5]).epsilon(1e-12));

  // pointwise agreement with the exact transported profile in the bulk
  double worst = 0;
  for (std::size_t i = 0; i < G.size(); ++i) {
    const Vec3& v = grid.nodes[i];
    if (norm2(v) > 9) continue;
    const Vec3 f = rotate(v, {0, 0, 1}, tau);
    const double exact = 1 + 0.2 * (f[0] + 0.3 * f[1] * f[2]) * std::exp(-norm2(f) / 4);
    worst = std::max(worst, std::abs(H[i] - exact));
  }
  CHECK(worst < 5e-3);

  // a fluctuation keeps its W norm instead, and the step commutes with scaling
  std::vector<double> g(G.size()), g2(G.size());
  for (std::size_t i = 0; i < G.size(); ++i) {
    g[i] = G[i] - 1;
    g2[i] = 3 * g[i];
  }
  auto norm = [&](const std::vector<double>& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += grid.weights[i] * x[i] * x[i];
    return s;
  };
  const double n0 = norm(g);
  P.apply(g, 0.0, {}, tau, 0.0);
  P.apply(g2, 0.0, {}, tau, 0.0);
  CHECK(norm(g) == doctest::Approx(n0).epsilon(1e-12));
  double gap = 0;
  for (std::size_t i = 0; i < G.size(); ++i) gap = std::max(gap, std::abs(g2[i] - 3 * g[i]));
  CHECK(gap < 1e-13);
}

TEST_CASE("fluctuation background and equilibrium are preserved") {
  auto grid = build_grid(8, 6.0);
  ForcePropagator P(grid, ForceField::magnetic(Vec3{0.2, 0.5, 1}));
  std::vector<double> one(grid.size(), 1.0), zero(grid.size(), 0.0);
  P.apply(one, 0.0, {}, 0.05);
  P.apply(zero, 0.0, {}, 0.05, 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(one[i] - 1) < 1e-13);
    CHECK(zero[i] == 0.0);
  }
}

TEST_CASE("custom field tracks the magnetic flow it spells out") {
  auto grid = build_grid(16, 6.0);
  ForcePropagator Pm(grid, ForceField::magnetic(Vec3{0, 0, 1}));
  ForcePropagator Pc(grid, custom("cross(v, [0, 0, 1])", "0"));
  std::vector<double> G(grid.size());
  for (std::size_t i = 0; i < G.size(); ++i) G[i] = 1 + 0.3 * grid.nodes[i][0] * std::exp(-norm2(grid.nodes[i]) / 4);
  auto A = G, B = G;
  for (int s = 0; s < 5; ++s) {
    Pm.apply(A, 0.02 * s, {}, 0.02);
    Pc.apply(B, 0.02 * s, {}, 0.02);
  }
  double worst = 0, mA = 0, mB = 0;
  for (std::size_t i = 0; i < G.size(); ++i) {
    worst = std::max(worst, std::abs(A[i] - B[i]));
    mA += grid.weights[i] * A[i];
    mB += grid.weights[i] * B[i];
  }
  CHECK(worst < 2e-2);
  CHECK(mA == doctest::Approx(mB).epsilon(1e-14));
}
