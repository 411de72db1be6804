#include "collision.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "fastmath.hpp"
#include "parallel.hpp"

namespace dvb {

namespace {

constexpr int kMaxRow = 256;
constexpr std::size_t kMaxChunks = 64;

double frac_energy(double o) {
  double t = o - std::floor(o);
  return t * (1.0 - t);
}

bool in_half_space(const std::array<int, 3>& d) {
  return d[2] > 0 || (d[2] == 0 && (d[1] > 0 || (d[1] == 0 && d[0] > 0)));
}

}  // namespace

namespace {

// The radius root can sit on a plateau whose top end puts the point exactly on a lattice plane;
// bisection stops a few ulps short, which would drop boundary nodes from the hull.
double snap(double o) {
  const double r = std::round(o);
  return std::abs(o - r) <= 1e-10 ? r : o;
}

}  // namespace

double corrected_radius(const std::array<int, 3>& d, const Vec3& sigma) {
  const double r2 = 0.25 * (double(d[0]) * d[0] + double(d[1]) * d[1] + double(d[2]) * d[2]);
  const double r = std::sqrt(r2);
  auto f = [&](double s) {
    double e = 0;
    for (int a = 0; a < 3; ++a) e += frac_energy(0.5 * d[a] + s * sigma[a]) + frac_energy(0.5 * d[a] - s * sigma[a]);
    return s * s + 0.5 * e - r2;
  };
  if (r == 0) return 0;
  if (f(r) <= 0) return r;
  // f(0) <= 0 always (the midpoint has half-integer coordinates only where d is odd).
  constexpr int steps = 512;
  double hi = r, lo = 0;
  for (int m = 1; m <= steps; ++m) {
    double s = r * (steps - m) / steps;
    if (f(s) <= 0) {
      lo = s;
      break;
    }
    hi = s;
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) <= 0)
      lo = mid;
    else
      hi = mid;
  }
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

std::size_t CollisionTable::estimate_bytes(int n, int n_sigma) {
  const std::size_t m = 2 * static_cast<std::size_t>(n) - 1;
  return (m * m * m / 2) * (n_sigma / 2) * sizeof(TableEntry) + m * m * m * sizeof(int);
}

CollisionTable::CollisionTable(const VelocityGrid& grid, const SphereQuadrature& sphere, const CollisionKernel& kernel,
                               CollisionOptions opts)
    : grid_(grid), sphere_(sphere), kernel_(kernel), opts_(opts) {
  require(grid_.n <= kMaxRow, Errc::invalid_argument, "collision table: n_per_axis too large");
  require(sphere_.size() % 2 == 0, Errc::invalid_argument, "collision table: sphere must be antipodal");
  require(!(opts_.energy_cutoff <= 0), Errc::invalid_argument, "collision table: energy cutoff must be positive");
  const std::size_t need = estimate_bytes(grid_.n, static_cast<int>(sphere_.size()));
  require(need <= opts_.max_table_bytes, Errc::budget,
          "collision table needs " + std::to_string(need) + " bytes, budget is " + std::to_string(opts_.max_table_bytes));
  build();
}

std::size_t CollisionTable::bytes() const { return entries_.size() * sizeof(TableEntry); }

void CollisionTable::build() {
  const int n = grid_.n;
  P_ = n + 2;
  for (int s = 0; s < 8; ++s) so_[s] = (s & 1) + P_ * (((s >> 1) & 1) + P_ * ((s >> 2) & 1));
  sq_.resize(n);
  for (int a = 0; a < n; ++a) sq_[a] = grid_.coord(a) * grid_.coord(a);
  pw_ = pad(grid_.weights);

  const int half_k = static_cast<int>(sphere_.size() / 2);
  for (int d3 = 0; d3 < n; ++d3)
    for (int d2 = -(n - 1); d2 < n; ++d2)
      for (int d1 = -(n - 1); d1 < n; ++d1) {
        std::array<int, 3> d{d1, d2, d3};
        if (!in_half_space(d)) continue;
        const double dn = std::sqrt(double(d1) * d1 + double(d2) * d2 + double(d3) * d3);
        for (int h = 0; h < half_k; ++h) {
          TableEntry e;
          e.d = d;
          e.k = 2 * h;
          const Vec3& sg = sphere_.nodes[e.k];
          e.r = 0.5 * dn;
          e.r_tilde = corrected_radius(d, sg);
          double mu = (d1 * sg[0] + d2 * sg[1] + d3 * sg[2]) / dn;
          double z = dn * grid_.dv;
          e.weight = sphere_.weights[e.k] * 0.5 * (kernel_.eval(z, mu) + kernel_.eval(z, -mu));
          for (int a = 0; a < 3; ++a) {
            double o1 = snap(0.5 * d[a] + e.r_tilde * sg[a]);
            double o2 = snap(0.5 * d[a] - e.r_tilde * sg[a]);
            e.base1[a] = static_cast<int>(std::floor(o1));
            e.base2[a] = static_cast<int>(std::floor(o2));
            e.t1[a] = o1 - e.base1[a];
            e.t2[a] = o2 - e.base2[a];
            int hi1 = n - 1 - e.base1[a] - (e.t1[a] > 0 ? 1 : 0);
            int hi2 = n - 1 - e.base2[a] - (e.t2[a] > 0 ? 1 : 0);
            e.lo[a] = std::max({0, -d[a], -e.base1[a], -e.base2[a]});
            e.hi[a] = std::min({n - 1, n - 1 - d[a], hi1, hi2});
          }
          e.box = 1;
          for (int a = 0; a < 3; ++a) e.box *= std::max(0, e.hi[a] - e.lo[a] + 1);
          for (int s = 0; s < 8; ++s) {
            double w1 = 1, w2 = 1;
            for (int a = 0; a < 3; ++a) {
              bool up = (s >> a) & 1;
              w1 *= up ? e.t1[a] : 1 - e.t1[a];
              w2 *= up ? e.t2[a] : 1 - e.t2[a];
            }
            e.w1[s] = w1;
            e.w2[s] = w2;
          }
          e.off1 = e.base1[0] + P_ * (e.base1[1] + std::ptrdiff_t(P_) * e.base1[2]);
          e.off2 = e.base2[0] + P_ * (e.base2[1] + std::ptrdiff_t(P_) * e.base2[2]);
          e.doff = d1 + P_ * (d2 + std::ptrdiff_t(P_) * d3);
          entries_.push_back(e);
        }
      }

  // contiguous chunks of roughly equal work; fixed count so results do not depend on threads
  long total = 0;
  for (std::size_t q = 0; q < entries_.size(); ++q)
    if (entries_[q].box > 0) total += entries_[q].box;
  const std::size_t nch = std::max<std::size_t>(1, std::min(kMaxChunks, entries_.size()));
  chunk_begin_.assign(1, 0);
  long acc = 0;
  for (std::size_t q = 0; q < entries_.size(); ++q) {
    acc += entries_[q].box;
    if (chunk_begin_.size() < nch && acc * static_cast<long>(nch) >= total * static_cast<long>(chunk_begin_.size()))
      chunk_begin_.push_back(q + 1);
  }
  if (chunk_begin_.back() != entries_.size()) chunk_begin_.push_back(entries_.size());
}

std::vector<double> CollisionTable::pad(std::span<const double> x) const {
  require(x.size() == grid_.size(), Errc::invalid_argument, "collision: input length does not match grid");
  const int n = grid_.n;
  std::vector<double> p(static_cast<std::size_t>(P_) * P_ * P_, 0.0);
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a)
        p[(a + 1) + P_ * ((b + 1) + std::size_t(P_) * (c + 1))] = x[grid_.index(a, b, c)];
  return p;
}

std::vector<double> CollisionTable::unpad_divide(const std::vector<double>& acc) const {
  const int n = grid_.n;
  std::vector<double> out(grid_.size());
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        std::size_t i = grid_.index(a, b, c);
        out[i] = acc[(a + 1) + P_ * ((b + 1) + std::size_t(P_) * (c + 1))] / grid_.weights[i];
      }
  return out;
}

namespace {

// Row [a0, a1] of partner indices l = (a, l2, l3) satisfying the energy cutoff.
struct RowRange {
  const std::vector<double>& sq;
  double limit2;
  bool ok(const TableEntry& e, int a, int l2, int l3) const {
    double el = (sq[a] + sq[l2]) + sq[l3];
    double ej = (sq[a + e.d[0]] + sq[l2 + e.d[1]]) + sq[l3 + e.d[2]];
    return el + ej <= limit2;
  }
  bool range(const TableEntry& e, int l2, int l3, int& a0, int& a1) const {
    a0 = e.lo[0];
    a1 = e.hi[0];
    if (!std::isfinite(limit2)) return a0 <= a1;
    while (a0 <= a1 && !ok(e, a0, l2, l3)) ++a0;
    while (a1 >= a0 && !ok(e, a1, l2, l3)) --a1;
    return a0 <= a1;
  }
};

}  // namespace

template <class RowOp>
void CollisionTable::sweep(RowOp&& op, bool need_acc, std::vector<double>* acc, double* scalar) const {
  const std::size_t nch = chunk_begin_.size() - 1;
  const std::size_t np = static_cast<std::size_t>(P_) * P_ * P_;
  std::vector<std::vector<double>> accs(need_acc ? nch : 0);
  std::vector<double> scal(nch, 0.0);
  const RowRange rr{sq_, 2.0 * opts_.energy_cutoff};
  for_each_chunk(nch, opts_.threads, [&](std::size_t c) {
    double* a = nullptr;
    if (need_acc) {
      accs[c].assign(np, 0.0);
      a = accs[c].data();
    }
    double s = 0;
    for (std::size_t q = chunk_begin_[c]; q < chunk_begin_[c + 1]; ++q) {
      const TableEntry& e = entries_[q];
      if (e.box == 0) continue;
      for (int l3 = e.lo[2]; l3 <= e.hi[2]; ++l3)
        for (int l2 = e.lo[1]; l2 <= e.hi[1]; ++l2) {
          int a0, a1;
          if (!rr.range(e, l2, l3, a0, a1)) continue;
          std::size_t base = (a0 + 1) + P_ * ((l2 + 1) + std::size_t(P_) * (l3 + 1));
          op(e, base, a1 - a0 + 1, a, s);
        }
    }
    scal[c] = s;
  });
  if (need_acc) {
    acc->assign(np, 0.0);
    for (std::size_t c = 0; c < nch; ++c)
      for (std::size_t i = 0; i < np; ++i) (*acc)[i] += accs[c][i];
  }
  if (scalar) {
    double s = 0;
    for (double v : scal) s += v;
    *scalar = s;
  }
}

namespace {

// acc[stencil] += sign * w * val for both post-collision points
inline void scatter_stencils(const TableEntry& e, const std::array<std::ptrdiff_t, 8>& so, double* __restrict acc,
                             std::size_t base, int len, const double* __restrict val, double sign) {
  for (int s = 0; s < 8; ++s) {
    const double c1 = sign * e.w1[s];
    double* __restrict p = acc + base + e.off1 + so[s];
    for (int q = 0; q < len; ++q) p[q] += c1 * val[q];
  }
  for (int s = 0; s < 8; ++s) {
    const double c2 = sign * e.w2[s];
    double* __restrict p = acc + base + e.off2 + so[s];
    for (int q = 0; q < len; ++q) p[q] += c2 * val[q];
  }
}

// out[q] = I'x + I'*x at the row's partners
inline void interpolate_pair(const TableEntry& e, const std::array<std::ptrdiff_t, 8>& so, const double* __restrict x,
                             std::size_t base, int len, double* __restrict out) {
  const double* g1 = x + base + e.off1;
  const double* g2 = x + base + e.off2;
  for (int q = 0; q < len; ++q) {
    double a = 0;
    for (int s = 0; s < 8; ++s) a += e.w1[s] * g1[q + so[s]] + e.w2[s] * g2[q + so[s]];
    out[q] = a;
  }
}

inline void interpolate_one(const double* w, std::ptrdiff_t off, const std::array<std::ptrdiff_t, 8>& so,
                            const double* __restrict x, std::size_t base, int len, double* __restrict out) {
  const double* g = x + base + off;
  for (int q = 0; q < len; ++q) {
    double a = 0;
    for (int s = 0; s < 8; ++s) a += w[s] * g[q + so[s]];
    out[q] = a;
  }
}

}  // namespace

std::vector<double> CollisionTable::q_nonlinear(std::span<const double> G, double* R) const {
  std::vector<double> pg = pad(G);
  std::vector<double> pl(pg.size(), 0.0);
  for (std::size_t i = 0; i < pg.size(); ++i) {
    if (pw_[i] == 0) continue;  // padding
    pg[i] = std::max(pg[i], opts_.log_floor);
    pl[i] = std::log(pg[i]);
  }
  const double* W = pw_.data();
  const double* Gp = pg.data();
  const double* Lp = pl.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double* acc, double& s) {
    alignas(64) double a[kMaxRow], val[kMaxRow];
    interpolate_pair(e, so, Lp, base, len, a);
    const double* Gl = Gp + base;
    const double* Gj = Gp + base + e.doff;
    const double* Ll = Lp + base;
    const double* Lj = Lp + base + e.doff;
    const double* Wl = W + base;
    const double* Wj = W + base + e.doff;
    double rr = 0;
    for (int q = 0; q < len; ++q) {
      double om = Wl[q] * Wj[q] * e.weight * (fast_exp(a[q]) - Gl[q] * Gj[q]);
      rr += om * (a[q] - Ll[q] - Lj[q]);
      val[q] = om;
    }
    s += rr;
    double* __restrict A = acc;
    for (int q = 0; q < len; ++q) A[base + q] += val[q];
    for (int q = 0; q < len; ++q) A[base + e.doff + q] += val[q];
    scatter_stencils(e, so, acc, base, len, val, -1.0);
  };
  std::vector<double> acc;
  double rsum = 0;
  sweep(row, true, &acc, &rsum);
  if (R) *R = rsum;
  return conservation_fix(grid_, unpad_divide(acc));
}

double CollisionTable::dissipation(std::span<const double> G) const {
  std::vector<double> pg = pad(G);
  std::vector<double> pl(pg.size(), 0.0);
  for (std::size_t i = 0; i < pg.size(); ++i) {
    if (pw_[i] == 0) continue;
    require(pg[i] > 0, Errc::numeric, "dissipation: G must be positive");
    pl[i] = std::log(pg[i]);
  }
  const double* W = pw_.data();
  const double* Gp = pg.data();
  const double* Lp = pl.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double*, double& s) {
    alignas(64) double a[kMaxRow];
    interpolate_pair(e, so, Lp, base, len, a);
    double rr = 0;
    for (int q = 0; q < len; ++q) {
      std::size_t l = base + q, j = base + e.doff + q;
      double om = W[l] * W[j] * e.weight * (fast_exp(a[q]) - Gp[l] * Gp[j]);
      rr += om * (a[q] - Lp[l] - Lp[j]);
    }
    s += rr;
  };
  double r = 0;
  sweep(row, false, nullptr, &r);
  return r;
}

std::vector<double> CollisionTable::q_bilinear(std::span<const double> G, std::span<const double> K) const {
  std::vector<double> pg = pad(G), pk = pad(K);
  const double* W = pw_.data();
  const double* Gp = pg.data();
  const double* Kp = pk.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double* acc, double&) {
    alignas(64) double g1[kMaxRow], g2[kMaxRow], k1[kMaxRow], k2[kMaxRow], val[kMaxRow];
    interpolate_one(e.w1.data(), e.off1, so, Gp, base, len, g1);
    interpolate_one(e.w2.data(), e.off2, so, Gp, base, len, g2);
    interpolate_one(e.w1.data(), e.off1, so, Kp, base, len, k1);
    interpolate_one(e.w2.data(), e.off2, so, Kp, base, len, k2);
    for (int q = 0; q < len; ++q) {
      std::size_t l = base + q, j = base + e.doff + q;
      double d = 0.5 * (g1[q] * k2[q] + k1[q] * g2[q]) - 0.5 * (Gp[j] * Kp[l] + Kp[j] * Gp[l]);
      val[q] = W[l] * W[j] * e.weight * d;
    }
    double* __restrict A = acc;
    for (int q = 0; q < len; ++q) A[base + q] += val[q];
    for (int q = 0; q < len; ++q) A[base + e.doff + q] += val[q];
    scatter_stencils(e, so, acc, base, len, val, -1.0);
  };
  std::vector<double> acc;
  sweep(row, true, &acc, nullptr);
  return conservation_fix(grid_, unpad_divide(acc));
}

std::vector<double> CollisionTable::linearized(std::span<const double> g) const {
  std::vector<double> pg = pad(g);
  const double* W = pw_.data();
  const double* gp = pg.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double* acc, double&) {
    alignas(64) double a[kMaxRow], val[kMaxRow];
    interpolate_pair(e, so, gp, base, len, a);
    const double* gl = gp + base;
    const double* gj = gp + base + e.doff;
    const double* Wl = W + base;
    const double* Wj = W + base + e.doff;
    for (int q = 0; q < len; ++q) val[q] = Wl[q] * Wj[q] * e.weight * (a[q] - gl[q] - gj[q]);
    double* __restrict A = acc;
    for (int q = 0; q < len; ++q) A[base + q] -= val[q];
    for (int q = 0; q < len; ++q) A[base + e.doff + q] -= val[q];
    scatter_stencils(e, so, acc, base, len, val, 1.0);
  };
  std::vector<double> acc;
  sweep(row, true, &acc, nullptr);
  return conservation_fix(grid_, unpad_divide(acc));
}

double CollisionTable::quadratic_form(std::span<const double> g, std::span<const double> k) const {
  std::vector<double> pg = pad(g), pk = pad(k);
  const double* W = pw_.data();
  const double* gp = pg.data();
  const double* kp = pk.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double*, double& s) {
    alignas(64) double a[kMaxRow], b[kMaxRow];
    interpolate_pair(e, so, gp, base, len, a);
    interpolate_pair(e, so, kp, base, len, b);
    double acc = 0;
    for (int q = 0; q < len; ++q) {
      std::size_t l = base + q, j = base + e.doff + q;
      acc += W[l] * W[j] * e.weight * (a[q] - gp[l] - gp[j]) * (b[q] - kp[l] - kp[j]);
    }
    s += acc;
  };
  double r = 0;
  sweep(row, false, nullptr, &r);
  return r;
}

double CollisionTable::integrand_gap(std::span<const double> G_eps, double eps, std::span<const double> g_ref) const {
  require(eps > 0, Errc::invalid_argument, "integrand_gap: eps must be positive");
  std::vector<double> pg = pad(G_eps), pr = pad(g_ref);
  std::vector<double> pl(pg.size(), 0.0), pn(pg.size(), 1.0);
  for (std::size_t i = 0; i < pg.size(); ++i) {
    if (pw_[i] == 0) continue;
    pg[i] = std::max(pg[i], opts_.log_floor);
    pl[i] = std::log(pg[i]);
    pn[i] = 2.0 / 3.0 + pg[i] / 3.0;
  }
  const double* W = pw_.data();
  const double* Gp = pg.data();
  const double* Lp = pl.data();
  const double* Np = pn.data();
  const double* gp = pr.data();
  const auto& so = so_;
  const double inv = 1.0 / eps;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double*, double& s) {
    alignas(64) double a[kMaxRow], b[kMaxRow];
    interpolate_pair(e, so, Lp, base, len, a);
    interpolate_pair(e, so, gp, base, len, b);
    double acc = 0;
    for (int q = 0; q < len; ++q) {
      std::size_t l = base + q, j = base + e.doff + q;
      double qe = (fast_exp(a[q]) - Gp[l] * Gp[j]) * inv;
      double ql = b[q] - gp[l] - gp[j];
      acc += 2.0 * W[l] * W[j] * e.weight * (std::abs(qe / Np[j] - ql) + std::abs(qe / Np[l] - ql));
    }
    s += acc;
  };
  double r = 0;
  sweep(row, false, nullptr, &r);
  return r;
}

double CollisionTable::stiffness_bound() const {
  if (stiffness_ >= 0) return stiffness_;
  // Gershgorin on W^{1/2} L W^{-1/2}, which is symmetric and shares the spectrum of L
  std::vector<double> iw(pw_.size(), 0.0);
  for (std::size_t i = 0; i < pw_.size(); ++i)
    if (pw_[i] > 0) iw[i] = 1.0 / std::sqrt(pw_[i]);
  const double* W = pw_.data();
  const double* I = iw.data();
  const auto& so = so_;
  auto row = [&](const TableEntry& e, std::size_t base, int len, double* acc, double&) {
    alignas(64) double a[kMaxRow], val[kMaxRow];
    interpolate_pair(e, so, I, base, len, a);
    for (int q = 0; q < len; ++q) {
      std::size_t l = base + q, j = base + e.doff + q;
      val[q] = W[l] * W[j] * e.weight * (a[q] + I[l] + I[j]);
    }
    double* __restrict A = acc;
    for (int q = 0; q < len; ++q) A[base + q] += val[q];
    for (int q = 0; q < len; ++q) A[base + e.doff + q] += val[q];
    scatter_stencils(e, so, acc, base, len, val, 1.0);
  };
  std::vector<double> acc;
  sweep(row, true, &acc, nullptr);
  double m = 0;
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (pw_[i] > 0) m = std::max(m, acc[i] * iw[i]);
  stiffness_ = m;
  return stiffness_;
}

TripleView CollisionTable::triple(std::size_t i, std::size_t j, std::size_t k) const {
  const int n = grid_.n;
  require(i < grid_.size() && j < grid_.size() && k < sphere_.size(), Errc::invalid_argument,
          "triple: index out of range");
  TripleView tv;
  const Vec3& vi = grid_.nodes[i];
  const Vec3& vj = grid_.nodes[j];
  const Vec3& sg = sphere_.nodes[k];
  std::tie(tv.v_post, tv.vs_post) = post_collision(vi, vj, sg);
  tv.kernel = kernel_(Vec3{vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]}, sg);
  std::array<int, 3> ia{int(i % n), int(i / n % n), int(i / n / n)};
  std::array<int, 3> ja{int(j % n), int(j / n % n), int(j / n / n)};
  if (i == j) {
    tv.p_post = tv.ps_post = vi;
    tv.post.node.fill(i);
    tv.post_star.node.fill(i);
    tv.post.weight[0] = tv.post_star.weight[0] = 1.0;
    return tv;
  }
  std::array<int, 3> d, l;
  for (int a = 0; a < 3; ++a) d[a] = ia[a] - ja[a];
  if (in_half_space(d)) {
    l = ja;
  } else {
    for (int a = 0; a < 3; ++a) d[a] = -d[a];
    l = ia;
  }
  // entries are stored in generation order: d3 outer, then d2, d1, then sigma pairs
  const int m = 2 * n - 1;
  const int half_k = static_cast<int>(sphere_.size() / 2);
  long before;
  if (d[2] == 0) {
    // half plane d3 == 0: rows d2 > 0, or d2 == 0 and d1 > 0
    before = d[1] == 0 ? (d[0] - 1) : (n - 1) + (long(d[1]) - 1) * m + (d[0] + n - 1);
  } else {
    long plane0 = (long(m) * m - 1) / 2;
    before = plane0 + (long(d[2]) - 1) * m * m + long(d[1] + n - 1) * m + (d[0] + n - 1);
  }
  const TableEntry& e = entries_[static_cast<std::size_t>(before) * half_k + k / 2];
  const bool even = (k % 2) == 0;

  tv.in_box = true;
  for (int a = 0; a < 3; ++a) tv.in_box = tv.in_box && l[a] >= e.lo[a] && l[a] <= e.hi[a];
  tv.active = tv.in_box;
  if (tv.in_box && std::isfinite(opts_.energy_cutoff)) {
    RowRange rr{sq_, 2.0 * opts_.energy_cutoff};
    int a0, a1;
    tv.active = rr.range(e, l[1], l[2], a0, a1) && l[0] >= a0 && l[0] <= a1;
  }
  auto fill = [&](const std::array<int, 3>& b, const std::array<double, 3>& t, const std::array<double, 8>& w,
                  Stencil& st, Vec3& p) {
    for (int a = 0; a < 3; ++a) p[a] = grid_.coord(l[a]) + (b[a] + t[a]) * grid_.dv;
    if (!tv.in_box) return;
    for (int s = 0; s < 8; ++s) {
      std::array<int, 3> c;
      for (int a = 0; a < 3; ++a) c[a] = std::min(l[a] + b[a] + ((s >> a) & 1), n - 1);
      st.node[s] = grid_.index(c[0], c[1], c[2]);
      st.weight[s] = w[s];
    }
  };
  if (even) {
    fill(e.base1, e.t1, e.w1, tv.post, tv.p_post);
    fill(e.base2, e.t2, e.w2, tv.post_star, tv.ps_post);
  } else {
    fill(e.base2, e.t2, e.w2, tv.post, tv.p_post);
    fill(e.base1, e.t1, e.w1, tv.post_star, tv.ps_post);
  }
  return tv;
}

double CollisionTable::in_box_fraction() const {
  const double nv = static_cast<double>(grid_.size());
  const double ns = static_cast<double>(sphere_.size());
  double count = nv * ns;
  for (const auto& e : entries_) count += 4.0 * static_cast<double>(e.box);
  return count / (nv * nv * ns);
}

double CollisionTable::in_box_fraction_weighted() const {
  const auto& w = grid_.axis_weights;
  const int n = grid_.n;
  auto axis_sum = [&](int d, int lo, int hi) {
    double s = 0;
    for (int a = lo; a <= hi; ++a) s += w[a] * w[a + d];
    return s;
  };
  double diag = 0;
  for (double x : grid_.weights) diag += x * x;
  double zero_b = 0;
  for (std::size_t k = 0; k < sphere_.size(); ++k) zero_b += sphere_.weights[k] * kernel_.eval(0.0, 1.0);
  double inside = diag * zero_b, all = diag * zero_b;
  for (const auto& e : entries_) {
    double full = 1, box = 1;
    for (int a = 0; a < 3; ++a) {
      full *= axis_sum(e.d[a], std::max(0, -e.d[a]), std::min(n - 1, n - 1 - e.d[a]));
      box *= e.hi[a] >= e.lo[a] ? axis_sum(e.d[a], e.lo[a], e.hi[a]) : 0.0;
    }
    all += 4.0 * e.weight * full;
    inside += 4.0 * e.weight * box;
  }
  return inside / all;
}

std::vector<double> CollisionTable::scaled_integrand(std::span<const double> G_eps, double eps,
                                                     Reconstruction rec) const {
  require(eps > 0, Errc::invalid_argument, "scaled_integrand: eps must be positive");
  require(G_eps.size() == grid_.size(), Errc::invalid_argument, "scaled_integrand: length mismatch");
  const std::size_t nv = grid_.size(), ns = sphere_.size();
  require(nv * nv * ns <= (std::size_t(1) << 27), Errc::budget, "scaled_integrand: grid too large for a dense table");
  std::vector<double> out(nv * nv * ns, 0.0);
  auto value = [&](const Stencil& s) {
    double a = 0;
    if (rec == Reconstruction::linear) {
      for (int q = 0; q < 8; ++q) a += s.weight[q] * G_eps[s.node[q]];
      return a;
    }
    for (int q = 0; q < 8; ++q) a += s.weight[q] * std::log(std::max(G_eps[s.node[q]], opts_.log_floor));
    return std::exp(a);
  };
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < nv; ++j)
      for (std::size_t k = 0; k < ns; ++k) {
        TripleView tv = triple(i, j, k);
        if (!tv.active || i == j) continue;
        out[(i * nv + j) * ns + k] = (value(tv.post) * value(tv.post_star) - G_eps[i] * G_eps[j]) / eps;
      }
  return out;
}

std::vector<double> conservation_fix(const VelocityGrid& grid, std::span<const double> q) {
  require(q.size() == grid.size(), Errc::invalid_argument, "conservation_fix: length mismatch");
  const std::size_t nv = grid.size();
  auto phi = [&](std::size_t i, int a) {
    const Vec3& v = grid.nodes[i];
    return a == 0 ? 1.0 : a < 4 ? v[a - 1] : norm2(v);
  };
  Eigen::Matrix<double, 5, 5> M = Eigen::Matrix<double, 5, 5>::Zero();
  Eigen::Matrix<double, 5, 1> rhs = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < nv; ++i) {
    double f[5];
    for (int a = 0; a < 5; ++a) f[a] = phi(i, a);
    for (int a = 0; a < 5; ++a) {
      rhs(a) += grid.weights[i] * f[a] * q[i];
      for (int b = 0; b < 5; ++b) M(a, b) += grid.weights[i] * f[a] * f[b];
    }
  }
  Eigen::Matrix<double, 5, 1> s = M.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::Matrix<double, 5, 5> Ms = s.asDiagonal() * M * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(Ms);
  require(es.eigenvalues()(0) > 1e-12 * es.eigenvalues()(4), Errc::numeric,
          "conservation_fix: invariant Gram matrix is singular on this grid");
  Eigen::Matrix<double, 5, 1> alpha = s.asDiagonal() * Ms.ldlt().solve(s.asDiagonal() * rhs);
  std::vector<double> out(q.begin(), q.end());
  for (std::size_t i = 0; i < nv; ++i) {
    double p = 0;
    for (int a = 0; a < 5; ++a) p += alpha(a) * phi(i, a);
    out[i] -= p;
  }
  return out;
}

}  // namespace dvb
