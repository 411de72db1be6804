#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "kernel.hpp"
#include "velocity_space.hpp"

namespace dvb {

struct CollisionOptions {
  // Pairs with (|v|^2 + |v*|^2)/2 above the cutoff are skipped entirely.
  double energy_cutoff = std::numeric_limits<double>::infinity();
  int threads = 1;
  std::size_t max_table_bytes = std::size_t(1) << 30;
  double log_floor = 1e-300;  // G is clamped here before taking logarithms
};

// Interpolation stencil of one post-collision point: 8 lattice nodes with trilinear weights.
struct Stencil {
  std::array<std::size_t, 8> node{};
  std::array<double, 8> weight{};
};

// Everything the discretization does with one ordered triple (i, j, k).
struct TripleView {
  Vec3 v_post{}, vs_post{};          // exact sigma-representation
  Vec3 p_post{}, ps_post{};          // interpolation points actually used
  Stencil post{}, post_star{};
  double kernel = 0;                 // b(v_i - v_j, sigma_k)
  bool in_box = true;                // both interpolation points inside the lattice hull
  bool active = true;                // in_box and within the energy cutoff
};

// One row of the reduced table: lattice offset d between the partners (d in a half-space)
// and one sigma per antipodal pair. Translation invariance in the partner index l makes this
// the whole table; the four ordered triples (l+d, l, +-sigma), (l, l+d, +-sigma) share it.
struct TableEntry {
  std::array<int, 3> d{};
  int k = 0;               // even sphere index
  double r = 0;            // |d|/2 in units of dv
  double r_tilde = 0;      // energy-corrected radius in units of dv
  double weight = 0;       // w_k (b(mu) + b(-mu)) / 2
  std::array<int, 3> base1{}, base2{};
  std::array<double, 3> t1{}, t2{};
  std::array<int, 3> lo{}, hi{};
  std::array<double, 8> w1{}, w2{};
  std::ptrdiff_t off1 = 0, off2 = 0, doff = 0;  // padded-array offsets relative to l
  long box = 0;                                 // number of l with both points in the hull
};

enum class Reconstruction { linear, geometric };

class CollisionTable {
 public:
  CollisionTable(const VelocityGrid& grid, const SphereQuadrature& sphere, const CollisionKernel& kernel,
                 CollisionOptions opts = {});

  static std::size_t estimate_bytes(int n_per_axis, int n_sigma);

  const VelocityGrid& grid() const { return grid_; }
  const SphereQuadrature& sphere() const { return sphere_; }
  const CollisionKernel& kernel() const { return kernel_; }
  const CollisionOptions& options() const { return opts_; }
  const std::vector<TableEntry>& entries() const { return entries_; }
  std::size_t bytes() const;

  TripleView triple(std::size_t i, std::size_t j, std::size_t k) const;

  // Fraction of ordered triples whose interpolation points fall inside the lattice hull,
  // unweighted and weighted by the collision measure.
  double in_box_fraction() const;
  double in_box_fraction_weighted() const;

  // Q(G, K) with linear reconstruction, symmetrized in (G, K), followed by conservation_fix.
  std::vector<double> q_bilinear(std::span<const double> G, std::span<const double> K) const;

  // Q(G, G) with G' = exp(I' log G); optionally also returns R(G) computed in the same pass.
  std::vector<double> q_nonlinear(std::span<const double> G, double* R = nullptr) const;

  // R(G) = 1/4 <<(G'G'* - G G*) log(G'G'*/(G G*))>>, geometric reconstruction.
  double dissipation(std::span<const double> G) const;

  // L g with its own symmetric integrand, followed by conservation_fix.
  std::vector<double> linearized(std::span<const double> g) const;

  // 1/4 <<q(g) q(k)>> with q(g) = g' + g'* - g - g*.
  double quadratic_form(std::span<const double> g, std::span<const double> k) const;

  // || q_eps / N_eps - q(g_ref) ||_{L1(dmu)}, N_eps taken at the first velocity of the triple.
  double integrand_gap(std::span<const double> G_eps, double eps, std::span<const double> g_ref) const;

  // q_eps on every ordered triple (i, j, k), flattened as (i * Nv + j) * Nsigma + k. Small grids only.
  std::vector<double> scaled_integrand(std::span<const double> G_eps, double eps,
                                       Reconstruction rec = Reconstruction::geometric) const;

  // Upper bound on the spectral radius of L: Gershgorin on the W-symmetrized operator. Cached.
  double stiffness_bound() const;

 private:
  template <class RowOp>
  void sweep(RowOp&& op, bool need_acc, std::vector<double>* acc, double* scalar) const;

  std::vector<double> pad(std::span<const double> x) const;
  std::vector<double> unpad_divide(const std::vector<double>& acc) const;
  void build();

  VelocityGrid grid_;
  SphereQuadrature sphere_;
  CollisionKernel kernel_;
  CollisionOptions opts_;
  std::vector<TableEntry> entries_;
  std::vector<std::size_t> chunk_begin_;
  std::vector<double> sq_;       // squared coordinate per axis index
  std::vector<double> pw_;       // padded weights
  std::array<std::ptrdiff_t, 8> so_{};
  int P_ = 0;
  mutable double stiffness_ = -1;
};

// Removes the W-orthogonal projection onto span{1, v1, v2, v3, |v|^2}.
std::vector<double> conservation_fix(const VelocityGrid& grid, std::span<const double> q);

// Energy-corrected radius: largest s in [0, r] with s^2 + (e(d/2 + s sigma) + e(d/2 - s sigma))/2 = r^2,
// where e(o) = sum_a frac(o_a)(1 - frac(o_a)). Grid units.
double corrected_radius(const std::array<int, 3>& d, const Vec3& sigma);

}  // namespace dvb
