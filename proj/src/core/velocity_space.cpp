#include "velocity_space.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"
#include "kernel.hpp"

namespace dvb {

double maxwellian(const Vec3& v) {
  static const double c = std::pow(2.0 * std::numbers::pi, -1.5);
  return c * std::exp(-0.5 * norm2(v));
}

VelocityGrid build_grid(int n_per_axis, double v_max, bool renormalize) {
  require(n_per_axis >= 4 && n_per_axis % 2 == 0, Errc::invalid_argument,
          "n_per_axis must be even and >= 4 (got " + std::to_string(n_per_axis) + ")");
  require(v_max > 0 && std::isfinite(v_max), Errc::invalid_argument, "v_max must be positive");

  VelocityGrid g;
  g.n = n_per_axis;
  g.v_max = v_max;
  g.dv = 2.0 * v_max / n_per_axis;
  g.cell_volume = g.dv * g.dv * g.dv;
  g.renormalized = renormalize;

  const double c1 = g.dv / std::sqrt(2.0 * std::numbers::pi);
  g.axis_weights.resize(g.n);
  double s1 = 0;
  for (int a = 0; a < g.n; ++a) {
    double x = g.coord(a);
    g.axis_weights[a] = c1 * std::exp(-0.5 * x * x);
  }
  // pairwise from the outside in so that +x and -x enter symmetrically
  for (int a = 0; a < g.n / 2; ++a) s1 += g.axis_weights[a] + g.axis_weights[g.n - 1 - a];
  g.raw_mass = s1 * s1 * s1;
  if (renormalize)
    for (double& w : g.axis_weights) w /= s1;

  const std::size_t nv = static_cast<std::size_t>(g.n) * g.n * g.n;
  g.nodes.resize(nv);
  g.weights.resize(nv);
  for (int c = 0; c < g.n; ++c)
    for (int b = 0; b < g.n; ++b)
      for (int a = 0; a < g.n; ++a) {
        std::size_t i = g.index(a, b, c);
        g.nodes[i] = {g.coord(a), g.coord(b), g.coord(c)};
        g.weights[i] = g.axis_weights[a] * g.axis_weights[b] * g.axis_weights[c];
      }
  return g;
}

double bracket(const VelocityGrid& grid, std::span<const double> xi) {
  require(xi.size() == grid.size(), Errc::invalid_argument,
          "bracket: table has " + std::to_string(xi.size()) + " entries, grid has " + std::to_string(grid.size()));
  // v and -v are mirror indices; summing them together keeps odd moments exactly zero
  const std::size_t n = xi.size();
  double s = 0;
  for (std::size_t i = 0; i < n / 2; ++i) s += xi[i] * grid.weights[i] + xi[n - 1 - i] * grid.weights[n - 1 - i];
  return s;
}

double bracket(const VelocityGrid& grid, const std::function<double(const Vec3&)>& xi) {
  return bracket(grid, tabulate(grid, xi));
}

std::vector<double> tabulate(const VelocityGrid& grid, const std::function<double(const Vec3&)>& f) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.nodes[i]);
  return out;
}

namespace {

void add_pair(SphereQuadrature& s, Vec3 v) {
  double r = std::sqrt(norm2(v));
  Vec3 u{v[0] / r, v[1] / r, v[2] / r};
  s.nodes.push_back(u);
  s.nodes.push_back({-u[0], -u[1], -u[2]});
}

// one representative of each antipodal pair
void octahedron(SphereQuadrature& s) {
  add_pair(s, {1, 0, 0});
  add_pair(s, {0, 1, 0});
  add_pair(s, {0, 0, 1});
}

void cube(SphereQuadrature& s) {
  add_pair(s, {1, 1, 1});
  add_pair(s, {1, 1, -1});
  add_pair(s, {1, -1, 1});
  add_pair(s, {-1, 1, 1});
}

void icosahedron(SphereQuadrature& s) {
  const double p = std::numbers::phi;
  add_pair(s, {0, 1, p});
  add_pair(s, {0, 1, -p});
  add_pair(s, {1, p, 0});
  add_pair(s, {1, -p, 0});
  add_pair(s, {p, 0, 1});
  add_pair(s, {-p, 0, 1});
}

void dodecahedron(SphereQuadrature& s) {
  const double p = std::numbers::phi, q = 1.0 / std::numbers::phi;
  cube(s);
  add_pair(s, {0, q, p});
  add_pair(s, {0, q, -p});
  add_pair(s, {q, p, 0});
  add_pair(s, {q, -p, 0});
  add_pair(s, {p, 0, q});
  add_pair(s, {-p, 0, q});
}

}  // namespace

SphereQuadrature build_sphere(int n_sigma) {
  SphereQuadrature s;
  switch (n_sigma) {
    case 6: octahedron(s); break;
    case 8: cube(s); break;
    case 12: icosahedron(s); break;
    case 20: dodecahedron(s); break;
    case 32:
      icosahedron(s);
      dodecahedron(s);
      break;
    default:
      fail(Errc::invalid_argument, "unsupported sphere size " + std::to_string(n_sigma) + " (use 6, 8, 12, 20 or 32)");
  }
  const std::size_t m = s.nodes.size();
  s.weights.assign(m, 1.0 / static_cast<double>(m));
  s.antipode.resize(m);
  for (std::size_t k = 0; k < m; ++k) s.antipode[k] = static_cast<int>(k ^ 1u);
  return s;
}

std::pair<Vec3, Vec3> post_collision(const Vec3& v, const Vec3& vs, const Vec3& sigma) {
  Vec3 c, z;
  for (int a = 0; a < 3; ++a) {
    c[a] = 0.5 * (v[a] + vs[a]);
    z[a] = v[a] - vs[a];
  }
  const double h = 0.5 * std::sqrt(norm2(z));
  Vec3 p, q;
  for (int a = 0; a < 3; ++a) {
    p[a] = c[a] + h * sigma[a];
    q[a] = c[a] - h * sigma[a];
  }
  return {p, q};
}

double double_bracket(const VelocityGrid& grid, const SphereQuadrature& sphere, const CollisionKernel& kernel,
                      const TripleIntegrand& phi) {
  double total = 0;
  const std::size_t nv = grid.size();
  for (std::size_t i = 0; i < nv; ++i) {
    double si = 0;
    for (std::size_t j = 0; j < nv; ++j) {
      Vec3 z{grid.nodes[i][0] - grid.nodes[j][0], grid.nodes[i][1] - grid.nodes[j][1],
             grid.nodes[i][2] - grid.nodes[j][2]};
      double sj = 0;
      for (std::size_t k = 0; k < sphere.size(); ++k) {
        double b = kernel(z, sphere.nodes[k]);
        if (b == 0) continue;
        sj += phi(grid.nodes[i], grid.nodes[j], sphere.nodes[k]) * b * sphere.weights[k];
      }
      si += sj * grid.weights[j];
    }
    total += si * grid.weights[i];
  }
  return total;
}

}  // namespace dvb
