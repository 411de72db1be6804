#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "collision.hpp"
#include "error.hpp"
#include "kernel.hpp"

using namespace dvb;

namespace {

double wdot(const VelocityGrid& g, const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.weights[i] * a[i] * b[i];
  return s;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<double> x(n);
  for (double& v : x) v = d(rng);
  return x;
}

double frac_energy(double o) {
  double f = o - std::floor(o);
  return f * (1 - f);
}

// Largest root of s^2 + (e(d/2 + s sigma) + e(d/2 - s sigma))/2 = r^2 on [0, r], by scan and bisection.
// The left side can be flat at r^2 over an interval, so "root" means within roundoff.
double radius_oracle(const std::array<int, 3>& d, const Vec3& sigma) {
  const double r = 0.5 * std::sqrt(double(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
  auto f = [&](double s) {
    double e = 0;
    for (int a = 0; a < 3; ++a) e += frac_energy(0.5 * d[a] + s * sigma[a]) + frac_energy(0.5 * d[a] - s * sigma[a]);
    const double v = s * s + 0.5 * e - r * r;
    return v <= 1e-14 ? 0.0 : v;
  };
  if (r == 0) return 0;
  const int steps = 20000;
  double hi = r;
  if (f(hi) <= 0) return hi;
  for (int k = steps - 1; k >= 0; --k) {
    const double lo = r * k / steps;
    if (f(lo) <= 0) {
      double a = lo, b = hi;
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        (f(m) <= 0 ? a : b) = m;
      }
      return 0.5 * (a + b);
    }
    hi = lo;
  }
  return 0;
}

struct Interp {
  std::array<std::size_t, 8> node;
  std::array<double, 8> w;
};

// Trilinear stencil at lattice position base + o (o in index units); false outside the hull.
bool trilinear(const VelocityGrid& g, const std::array<int, 3>& node, const Vec3& o, Interp& out) {
  int base[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    // points within 1e-10 of a lattice plane count as on it
    const double oa = std::abs(o[a] - std::round(o[a])) <= 1e-10 ? std::round(o[a]) : o[a];
    const int f = static_cast<int>(std::floor(oa));
    base[a] = node[a] + f;
    t[a] = oa - f;
    if (base[a] < 0 || base[a] + (t[a] > 0 ? 1 : 0) > g.n - 1) return false;
  }
  for (int c = 0; c < 8; ++c) {
    const int b0 = c & 1, b1 = (c >> 1) & 1, b2 = (c >> 2) & 1;
    const double w = (b0 ? t[0] : 1 - t[0]) * (b1 ? t[1] : 1 - t[1]) * (b2 ? t[2] : 1 - t[2]);
    out.w[c] = w;
    out.node[c] = w == 0 ? 0 : g.index(base[0] + b0, base[1] + b1, base[2] + b2);
  }
  return true;
}

// 1/4 sum_{ijk} W_i W_j w_k b q(a) q(b), straight from the definition, no table.
double naive_form(const VelocityGrid& g, const SphereQuadrature& s, double b0, const std::vector<double>& x,
                  const std::vector<double>& y) {
  std::unordered_map<int, double> radius;
  double total = 0;
  for (int i0 = 0; i0 < g.n; ++i0)
    for (int i1 = 0; i1 < g.n; ++i1)
      for (int i2 = 0; i2 < g.n; ++i2)
        for (int j0 = 0; j0 < g.n; ++j0)
          for (int j1 = 0; j1 < g.n; ++j1)
            for (int j2 = 0; j2 < g.n; ++j2) {
              const std::size_t i = g.index(i0, i1, i2), j = g.index(j0, j1, j2);
              if (i == j) continue;
              const std::array<int, 3> d{i0 - j0, i1 - j1, i2 - j2};
              for (std::size_t k = 0; k < s.size(); ++k) {
                const Vec3& sg = s.nodes[k];
                const int key = (((d[0] + 8) * 17 + d[1] + 8) * 17 + d[2] + 8) * 64 + static_cast<int>(k);
                auto it = radius.find(key);
                if (it == radius.end()) it = radius.emplace(key, radius_oracle(d, sg)).first;
                const double rt = it->second;
                Vec3 o, os;
                for (int a = 0; a < 3; ++a) {
                  o[a] = 0.5 * d[a] + rt * sg[a];
                  os[a] = 0.5 * d[a] - rt * sg[a];
                }
                Interp A, B;
                const std::array<int, 3> base{j0, j1, j2};
                if (!trilinear(g, base, o, A) || !trilinear(g, base, os, B)) continue;
                double qx = -x[i] - x[j], qy = -y[i] - y[j];
                for (int c = 0; c < 8; ++c) {
                  qx += A.w[c] * x[A.node[c]] + B.w[c] * x[B.node[c]];
                  qy += A.w[c] * y[A.node[c]] + B.w[c] * y[B.node[c]];
                }
                total += 0.25 * g.weights[i] * g.weights[j] * s.weights[k] * b0 * qx * qy;
              }
            }
  return total;
}

std::vector<double> invariant(const VelocityGrid& g, int a) {
  std::vector<double> phi(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) phi[i] = a == 0 ? 1.0 : a < 4 ? g.nodes[i][a - 1] : norm2(g.nodes[i]);
  return phi;
}

}  // namespace

TEST_CASE("corrected radius matches a brute-force root") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> di(-5, 5);
  auto sphere = build_sphere(32);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<int, 3> d{di(rng), di(rng), di(rng)};
    const Vec3& sg = sphere.nodes[trial % sphere.size()];
    const double mine = radius_oracle(d, sg);
    const double theirs = corrected_radius(d, sg);
    CAPTURE(d[0]);
    CAPTURE(d[1]);
    CAPTURE(d[2]);
    CHECK(theirs == doctest::Approx(mine).epsilon(1e-10));
    CHECK(theirs <= 0.5 * std::sqrt(double(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])) + 1e-15);
  }
  // even offsets land on nodes: no correction
  CHECK(corrected_radius({2, 0, 0}, {1, 0, 0}) == doctest::Approx(1.0));
}

TEST_CASE("table quadratic form equals the definition on a small grid") {
  auto g = build_grid(6, 5.0);
  auto s = build_sphere(6);
  CollisionTable T(g, s, CollisionKernel::maxwell(1.0));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2; ++trial) {
    const auto x = random_vec(rng, g.size()), y = random_vec(rng, g.size());
    const double ref = naive_form(g, s, 1.0, x, y);
    const double got = T.quadratic_form(x, y);
    CAPTURE((got - ref) / std::abs(ref));
    CHECK(got == doctest::Approx(ref).epsilon(1e-11));
  }
}

TEST_CASE("linearized operator: null space, symmetry, sign, classical identity") {
  auto g = build_grid(8, 6.0);
  CollisionTable T(g, build_sphere(12), CollisionKernel::maxwell(1.0));
  for (int a = 0; a < 4; ++a) {
    const auto phi = invariant(g, a);
    const auto L = T.linearized(phi);
    CHECK(std::sqrt(wdot(g, L, L) / wdot(g, phi, phi)) < 1e-12);
  }
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    const auto a = random_vec(rng, g.size()), b = random_vec(rng, g.size());
    const auto La = T.linearized(a), Lb = T.linearized(b);
    const double scale = std::sqrt(wdot(g, a, a) * wdot(g, b, b));
    CHECK(std::abs(wdot(g, b, La) - wdot(g, a, Lb)) / scale < 1e-12);
    CHECK(wdot(g, a, La) >= -1e-12 * wdot(g, a, a));
    CHECK(wdot(g, a, La) == doctest::Approx(T.quadratic_form(a, a)).epsilon(1e-10));
    // L g = -2 Q(1, g)
    const auto q = T.q_bilinear(std::vector<double>(g.size(), 1.0), a);
    double gap = 0;
    for (std::size_t i = 0; i < g.size(); ++i) gap = std::max(gap, std::abs(La[i] + 2 * q[i]));
    double top = 0;
    for (double v : La) top = std::max(top, std::abs(v));
    CHECK(gap <= 1e-10 * top);
  }
}

TEST_CASE("nonlinear operator conserves, dissipates exactly and vanishes at equilibrium") {
  auto g = build_grid(8, 6.0);
  CollisionTable T(g, build_sphere(12), CollisionKernel::maxwell(1.0));
  const std::vector<double> one(g.size(), 1.0);
  double R1 = -1;
  const auto Q1 = T.q_nonlinear(one, &R1);
  for (double q : Q1) CHECK(std::abs(q) < 1e-14);
  CHECK(std::abs(R1) < 1e-14);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> G(g.size());
  for (double& x : G) x = std::exp(0.4 * u(rng));
  double R = 0;
  const auto Q = T.q_nonlinear(G, &R);
  CHECK(R > 0);
  CHECK(T.dissipation(G) == doctest::Approx(R).epsilon(1e-12));
  double qn = 0, dH = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    qn += g.weights[i] * std::abs(Q[i]);
    dH += g.weights[i] * Q[i] * std::log(G[i]);
  }
  for (int a = 0; a < 5; ++a) CHECK(std::abs(wdot(g, invariant(g, a), Q)) < 1e-13 * qn);
  CHECK(dH == doctest::Approx(-R).epsilon(1e-9));
}

TEST_CASE("stiffness bound dominates the spectral radius") {
  auto g = build_grid(8, 6.0);
  CollisionTable T(g, build_sphere(12), CollisionKernel::maxwell(1.0), {.energy_cutoff = 32.0});
  std::mt19937_64 rng(9);
  auto x = random_vec(rng, g.size());
  double lambda = 0;
  for (int it = 0; it < 300; ++it) {
    auto y = T.linearized(x);
    lambda = std::sqrt(wdot(g, y, y) / wdot(g, x, x));
    const double n = std::sqrt(wdot(g, y, y));
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] / n;
  }
  CHECK(lambda > 0);
  CHECK(T.stiffness_bound() >= lambda);
  CHECK(T.stiffness_bound() < 10 * lambda);
}

TEST_CASE("energy cutoff removes high-energy pairs") {
  auto g = build_grid(8, 6.0);
  CollisionTable full(g, build_sphere(6), CollisionKernel::maxwell(1.0));
  CollisionTable cut(g, build_sphere(6), CollisionKernel::maxwell(1.0), {.energy_cutoff = 8.0});
  CHECK(cut.stiffness_bound() < full.stiffness_bound());
  std::mt19937_64 rng(2);
  const auto a = random_vec(rng, g.size());
  const auto L = cut.linearized(a);
  for (int k = 0; k < 4; ++k) {
    const auto phi = invariant(g, k);
    const auto Lp = cut.linearized(phi);
    CHECK(std::sqrt(wdot(g, Lp, Lp)) < 1e-12);
  }
  CHECK(std::isfinite(wdot(g, a, L)));
}

TEST_CASE("results do not depend on the thread count") {
  auto g = build_grid(8, 6.0);
  CollisionTable t1(g, build_sphere(8), CollisionKernel::hard_sphere(1.0), {.threads = 1});
  CollisionTable t3(g, build_sphere(8), CollisionKernel::hard_sphere(1.0), {.threads = 3});
  std::mt19937_64 rng(4);
  const auto a = random_vec(rng, g.size());
  CHECK(t1.linearized(a) == t3.linearized(a));
  std::vector<double> G(g.size());
  for (std::size_t i = 0; i < G.size(); ++i) G[i] = std::exp(0.1 * a[i]);
  double R1 = 0, R3 = 0;
  CHECK(t1.q_nonlinear(G, &R1) == t3.q_nonlinear(G, &R3));
  CHECK(R1 == R3);
}

TEST_CASE("table budget is enforced") {
  auto g = build_grid(8, 6.0);
  try {
    CollisionTable T(g, build_sphere(8), CollisionKernel::maxwell(1.0), {.max_table_bytes = 1024});
    FAIL("expected a budget error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::budget);
  }
}
