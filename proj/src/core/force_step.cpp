#include "force_step.hpp"

#include <cmath>

#include "error.hpp"

namespace dvb {

namespace {

constexpr std::size_t kCacheLimit = 16;

// cubic Lagrange weights on offsets -1, 0, 1, 2 at fraction f
void cubic(double f, double* w) {
  w[0] = -f * (f - 1) * (f - 2) / 6;
  w[1] = (f + 1) * (f - 1) * (f - 2) / 2;
  w[2] = -(f + 1) * f * (f - 2) / 2;
  w[3] = (f + 1) * f * (f - 1) / 6;
}

Vec3 rotate(const Vec3& v, const Vec3& w) {
  const double th = std::sqrt(norm2(w));
  if (th == 0) return v;
  const Vec3 u{w[0] / th, w[1] / th, w[2] / th};
  const Vec3 uxv = cross(u, v);
  const double c = std::cos(th), s = std::sin(th), uv = dot(u, v);
  Vec3 r;
  for (int a = 0; a < 3; ++a) r[a] = v[a] * c + uxv[a] * s + u[a] * uv * (1 - c);
  return r;
}

}  // namespace

ForcePropagator::ForcePropagator(const VelocityGrid& grid, const ForceField& field) : grid_(&grid), field_(field) {
  Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3& v = grid.nodes[i];
    const double phi[5] = {1, v[0], v[1], v[2], norm2(v)};
    for (int b = 0; b < 5; ++b)
      for (int a = 0; a < 5; ++a) A(b, a) += grid.weights[i] * phi[b] * phi[a];
  }
  phi_gram_inv_ = A.inverse();
  Eigen::Matrix2d A2;
  A2 << A(0, 0), A(0, 4), A(4, 0), A(4, 4);
  phi2_gram_inv_ = A2.inverse();
  if (field_.kind != ForceField::Kind::magnetic) return;
  const std::size_t nv = grid.size();
  chi_.resize(5 * nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = grid.nodes[i];
    const double env = std::exp(-0.25 * norm2(v));
    chi_[i] = env;
    for (int a = 0; a < 3; ++a) chi_[(a + 1) * nv + i] = v[a] * env;
    chi_[4 * nv + i] = norm2(v) * env;
  }
  chi_gram_.setZero();
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = grid.nodes[i];
    const double phi[5] = {1, v[0], v[1], v[2], norm2(v)};
    for (int b = 0; b < 5; ++b)
      for (int a = 0; a < 5; ++a) chi_gram_(b, a) += grid.weights[i] * phi[b] * chi_[a * nv + i];
  }
}

std::shared_ptr<const ForcePropagator::Stencil> ForcePropagator::rotation_stencil(const Vec3& w) const {
  std::lock_guard lk(mu_);
  auto it = cache_.find(w);
  if (it != cache_.end()) return it->second;
  if (cache_.size() >= kCacheLimit) cache_.clear();

  const VelocityGrid& g = *grid_;
  const int n = g.n;
  auto st = std::make_shared<Stencil>();
  st->node.resize(64 * g.size());
  st->weight.resize(64 * g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 p = rotate(g.nodes[i], w);
    int lo[3];
    double wa[3][4];
    for (int a = 0; a < 3; ++a) {
      double s = p[a] / g.dv + 0.5 * (n - 1);
      lo[a] = static_cast<int>(std::floor(s));
      cubic(s - lo[a], wa[a]);
    }
    int k = 0;
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a, ++k) {
          int ia = lo[0] - 1 + a, ib = lo[1] - 1 + b, ic = lo[2] - 1 + c;
          bool inside = ia >= 0 && ia < n && ib >= 0 && ib < n && ic >= 0 && ic < n;
          st->node[64 * i + k] = inside ? static_cast<int>(g.index(ia, ib, ic)) : -1;
          st->weight[64 * i + k] = wa[0][a] * wa[1][b] * wa[2][c];
        }
  }
  cache_.emplace(w, st);
  return st;
}

double ForcePropagator::perp_norm2(std::span<const double> G, double background, bool momentum) const {
  const VelocityGrid& g = *grid_;
  Eigen::Matrix<double, 5, 1> b = Eigen::Matrix<double, 5, 1>::Zero();
  double total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3& v = g.nodes[i];
    const double u = G[i] - background, wu = g.weights[i] * u;
    total += wu * u;
    b(0) += wu;
    for (int a = 0; a < 3; ++a) b(a + 1) += wu * v[a];
    b(4) += wu * norm2(v);
  }
  if (momentum) return total - b.dot(phi_gram_inv_ * b);
  Eigen::Vector2d b2(b(0), b(4));
  return total - b2.dot(phi2_gram_inv_ * b2);
}

void ForcePropagator::restore_norm(std::span<double> G, double background, bool momentum, double target) const {
  const VelocityGrid& g = *grid_;
  Eigen::Matrix<double, 5, 1> b = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3& v = g.nodes[i];
    const double wu = g.weights[i] * (G[i] - background);
    b(0) += wu;
    for (int a = 0; a < 3; ++a) b(a + 1) += wu * v[a];
    b(4) += wu * norm2(v);
  }
  Eigen::Matrix<double, 5, 1> c = Eigen::Matrix<double, 5, 1>::Zero();
  if (momentum) {
    c = phi_gram_inv_ * b;
  } else {
    Eigen::Vector2d c2 = phi2_gram_inv_ * Eigen::Vector2d(b(0), b(4));
    c(0) = c2(0);
    c(4) = c2(1);
  }
  std::vector<double> proj(g.size());
  double now = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3& v = g.nodes[i];
    proj[i] = c(0) + c(1) * v[0] + c(2) * v[1] + c(3) * v[2] + c(4) * norm2(v);
    const double p = G[i] - background - proj[i];
    now += g.weights[i] * p * p;
  }
  if (now <= 0 || target <= 0) return;
  const double s = std::sqrt(target / now);
  for (std::size_t i = 0; i < g.size(); ++i) G[i] = background + proj[i] + s * (G[i] - background - proj[i]);
}

double ForcePropagator::entropy(std::span<const double> G) const {
  const VelocityGrid& g = *grid_;
  double H = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(G[i] > 0)) return -1;
    H += g.weights[i] * (G[i] * std::log(G[i]) - G[i] + 1);
  }
  return H;
}

bool ForcePropagator::restore_entropy(std::span<double> G, bool momentum, double target) const {
  const VelocityGrid& g = *grid_;
  const std::size_t nv = g.size();
  // split G - 1 into its W-projection on the fixed moments and the rest; only the rest is scaled
  Eigen::Matrix<double, 5, 1> b = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = g.nodes[i];
    const double wu = g.weights[i] * (G[i] - 1);
    b(0) += wu;
    for (int a = 0; a < 3; ++a) b(a + 1) += wu * v[a];
    b(4) += wu * norm2(v);
  }
  Eigen::Matrix<double, 5, 1> c = Eigen::Matrix<double, 5, 1>::Zero();
  if (momentum) {
    c = phi_gram_inv_ * b;
  } else {
    Eigen::Vector2d c2 = phi2_gram_inv_ * Eigen::Vector2d(b(0), b(4));
    c(0) = c2(0);
    c(4) = c2(1);
  }
  std::vector<double> mean(nv), perp(nv), trial(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = g.nodes[i];
    mean[i] = 1 + c(0) + c(1) * v[0] + c(2) * v[1] + c(3) * v[2] + c(4) * norm2(v);
    perp[i] = G[i] - mean[i];
  }
  double s = 1;
  for (int it = 0; it < 50; ++it) {
    double H = 0, d1 = 0, d2 = 0;
    bool positive = true;
    for (std::size_t i = 0; i < nv && positive; ++i) {
      const double x = mean[i] + s * perp[i];
      positive = x > 0;
      if (!positive) break;
      const double lx = std::log(x);
      H += g.weights[i] * (x * lx - x + 1);
      d1 += g.weights[i] * lx * perp[i];
      d2 += g.weights[i] * perp[i] * perp[i] / x;
    }
    if (!positive || d2 <= 0) return false;
    const double step = (H - target) / d1;
    if (!std::isfinite(step)) return false;
    s -= step;
    if (std::abs(step) <= 1e-15) break;
  }
  if (!(s > 0.5 && s < 2)) return false;
  for (std::size_t i = 0; i < nv; ++i) trial[i] = mean[i] + s * perp[i];
  for (double x : trial)
    if (!(x > 0)) return false;
  std::copy(trial.begin(), trial.end(), G.begin());
  return true;
}

void ForcePropagator::apply(std::span<double> G, double t, const Vec3& x, double tau, double background) const {
  require(G.size() == grid_->size(), Errc::invalid_argument, "force step: length mismatch");
  switch (field_.kind) {
    case ForceField::Kind::zero: return;
    case ForceField::Kind::custom: apply_custom(G, t, x, tau, background); return;
    case ForceField::Kind::magnetic: apply_magnetic(G, t, x, tau, background); return;
  }
}

void ForcePropagator::apply_magnetic(std::span<double> G, double t, const Vec3& x, double tau,
                                     double background) const {
  const VelocityGrid& g = *grid_;
  const std::size_t nv = g.size();
  const Vec3 B = field_.magnetic_field(t + 0.5 * tau, x);
  // dv/dt = v x B turns v by -|B| t about B; the foot of the characteristic is the opposite turn
  const Vec3 w{B[0] * tau, B[1] * tau, B[2] * tau};
  if (norm2(w) == 0) return;

  Eigen::Matrix<double, 5, 1> before = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = g.nodes[i];
    const double wg = g.weights[i] * G[i];
    before(0) += wg;
    for (int a = 0; a < 3; ++a) before(a + 1) += wg * v[a];
    before(4) += wg * norm2(v);
  }
  const Vec3 m_new = rotate({before(1), before(2), before(3)}, {-w[0], -w[1], -w[2]});
  const double perp = perp_norm2(G, background, true);
  const double H0 = background == 1.0 ? entropy(G) : -1;

  const auto st = rotation_stencil(w);
  std::vector<double> old(G.begin(), G.end());
  for (std::size_t i = 0; i < nv; ++i) {
    const int* nd = st->node.data() + 64 * i;
    const double* wt = st->weight.data() + 64 * i;
    double acc = 0;
    for (int k = 0; k < 64; ++k) acc += wt[k] * (nd[k] < 0 ? background : old[nd[k]]);
    G[i] = acc;
  }

  Eigen::Matrix<double, 5, 1> after = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& v = g.nodes[i];
    const double wg = g.weights[i] * G[i];
    after(0) += wg;
    for (int a = 0; a < 3; ++a) after(a + 1) += wg * v[a];
    after(4) += wg * norm2(v);
  }
  Eigen::Matrix<double, 5, 1> target = before;
  for (int a = 0; a < 3; ++a) target(a + 1) = m_new[a];
  const Eigen::Matrix<double, 5, 1> c = chi_gram_.partialPivLu().solve(target - after);
  for (std::size_t i = 0; i < nv; ++i) {
    double d = 0;
    for (int a = 0; a < 5; ++a) d += c(a) * chi_[a * nv + i];
    G[i] += d;
  }
  if (H0 > 0 && restore_entropy(G, true, H0)) return;
  restore_norm(G, background, true, perp);
}

void ForcePropagator::apply_custom(std::span<double> G, double t, const Vec3& x, double tau,
                                   double background) const {
  const VelocityGrid& g = *grid_;
  const int n = g.n;
  auto moments = [&](std::span<const double> u) {
    double m = 0, e = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      m += g.weights[i] * u[i];
      e += g.weights[i] * norm2(g.nodes[i]) * u[i];
    }
    return std::pair{m, e};
  };
  auto [m0, e0] = moments(G);
  const double perp = perp_norm2(G, background, false);
  const double H0 = background == 1.0 ? entropy(G) : -1;
  std::vector<double> old(G.begin(), G.end());
  auto sample = [&](const Vec3& p) {
    double f[3];
    int lo[3];
    for (int a = 0; a < 3; ++a) {
      double s = p[a] / g.dv + 0.5 * (n - 1);
      lo[a] = static_cast<int>(std::floor(s));
      f[a] = s - lo[a];
    }
    double val = 0;
    for (int s = 0; s < 8; ++s) {
      double w = 1;
      int c[3];
      for (int a = 0; a < 3; ++a) {
        int up = (s >> a) & 1;
        c[a] = lo[a] + up;
        w *= up ? f[a] : 1 - f[a];
      }
      if (w == 0) continue;
      bool inside = c[0] >= 0 && c[0] < n && c[1] >= 0 && c[1] < n && c[2] >= 0 && c[2] < n;
      val += w * (inside ? old[g.index(c[0], c[1], c[2])] : background);
    }
    return val;
  };
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3& v = g.nodes[i];
    Vec3 k1 = field_.evaluate(t + tau, x, v);
    Vec3 mid{v[0] - 0.5 * tau * k1[0], v[1] - 0.5 * tau * k1[1], v[2] - 0.5 * tau * k1[2]};
    Vec3 k2 = field_.evaluate(t + 0.5 * tau, x, mid);
    G[i] = sample({v[0] - tau * k2[0], v[1] - tau * k2[1], v[2] - tau * k2[2]});
  }
  // restore <G> and <|v|^2 G> with a correction in span{1, |v|^2}
  auto [m1, e1] = moments(G);
  double a11 = 0, a12 = 0, a22 = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double v2 = norm2(g.nodes[i]);
    a11 += g.weights[i];
    a12 += g.weights[i] * v2;
    a22 += g.weights[i] * v2 * v2;
  }
  double det = a11 * a22 - a12 * a12;
  double alpha = ((m0 - m1) * a22 - (e0 - e1) * a12) / det;
  double beta = ((e0 - e1) * a11 - (m0 - m1) * a12) / det;
  for (std::size_t i = 0; i < g.size(); ++i) G[i] += alpha + beta * norm2(g.nodes[i]);
  if (H0 > 0 && restore_entropy(G, false, H0)) return;
  restore_norm(G, background, false, perp);
}

}  // namespace dvb
