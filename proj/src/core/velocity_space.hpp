#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dvb {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm2(const Vec3& a) { return dot(a, a); }

// Cell-centred lattice on [-v_max, v_max]^3; node a on each axis sits at (a - (n-1)/2) dv.
struct VelocityGrid {
  int n = 0;
  double v_max = 0;
  double dv = 0;
  double cell_volume = 0;
  bool renormalized = false;
  double raw_mass = 0;  // sum of M(v_i) dv^3 before renormalization
  std::vector<Vec3> nodes;
  std::vector<double> weights;
  std::vector<double> axis_weights;  // 1D factors; weights[i] == w[a] w[b] w[c]

  std::size_t size() const { return nodes.size(); }
  std::size_t index(int a, int b, int c) const {
    return static_cast<std::size_t>(a) + static_cast<std::size_t>(n) * (b + static_cast<std::size_t>(n) * c);
  }
  double coord(int a) const { return (a - 0.5 * (n - 1)) * dv; }
};

VelocityGrid build_grid(int n_per_axis, double v_max, bool renormalize = true);

double maxwellian(const Vec3& v);

double bracket(const VelocityGrid& grid, std::span<const double> xi);
double bracket(const VelocityGrid& grid, const std::function<double(const Vec3&)>& xi);

// Tabulate a function of v on the grid.
std::vector<double> tabulate(const VelocityGrid& grid, const std::function<double(const Vec3&)>& f);

// Antipodal spherical design; nodes come in pairs (2m, 2m+1) with sigma_{2m+1} = -sigma_{2m}.
struct SphereQuadrature {
  std::vector<Vec3> nodes;
  std::vector<double> weights;
  std::vector<int> antipode;
  std::size_t size() const { return nodes.size(); }
};

// Supported sizes: 6, 8, 12, 20, 32.
SphereQuadrature build_sphere(int n_sigma);

struct CollisionKernel;

using TripleIntegrand = std::function<double(const Vec3& v, const Vec3& vs, const Vec3& sigma)>;

// Sum over i, j, k of Phi(v_i, v_j, sigma_k) b(v_i - v_j, sigma_k) w_k W_j W_i.
double double_bracket(const VelocityGrid& grid, const SphereQuadrature& sphere, const CollisionKernel& kernel,
                      const TripleIntegrand& phi);

// Exact sigma-representation of an elastic collision.
std::pair<Vec3, Vec3> post_collision(const Vec3& v, const Vec3& vs, const Vec3& sigma);

}  // namespace dvb
