#include "entropy_diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace dvb {

double h(double z) {
  require(z >= -1, Errc::invalid_argument, "h: argument below -1");
  if (z == -1) return 1.0;
  return (1 + z) * std::log1p(z) - z;
}

double r(double z) {
  require(z > -1, Errc::invalid_argument, "r: argument must exceed -1");
  return z * std::log1p(z);
}

namespace {

std::size_t nv_of(const PhaseGrid& phase, std::size_t len) {
  const std::size_t nv = phase.velocity.size();
  require(len == nv * phase.cells(), Errc::invalid_argument, "values do not match the phase grid");
  return nv;
}

template <class F>
double integrate(const PhaseGrid& phase, std::size_t len, F&& f) {
  const std::size_t nv = nv_of(phase, len);
  const auto& W = phase.velocity.weights;
  double total = 0;
  for (std::size_t m = 0; m < phase.cells(); ++m) {
    double s = 0;
    for (std::size_t i = 0; i < nv; ++i) s += W[i] * f(m * nv + i);
    total += phase.dx() * s;
  }
  return total;
}

}  // namespace

double entropy_H(const PhaseGrid& phase, std::span<const double> G) {
  for (double v : G) require(v >= 0, Errc::invalid_argument, "entropy_H: negative relative density");
  return integrate(phase, G.size(), [&](std::size_t i) { return h(G[i] - 1); });
}

double dissipation_R(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> G) {
  const std::size_t nv = nv_of(phase, G.size());
  for (double v : G) require(v > 0, Errc::invalid_argument, "dissipation_R: G must be positive");
  double total = 0;
  for (std::size_t m = 0; m < phase.cells(); ++m) total += phase.dx() * table.dissipation(G.subspan(m * nv, nv));
  return total;
}

std::vector<double> fluctuation(std::span<const double> G, double eps) {
  require(eps > 0, Errc::invalid_argument, "fluctuation: eps must be positive");
  std::vector<double> g(G.size());
  for (std::size_t i = 0; i < G.size(); ++i) g[i] = (G[i] - 1) / eps;
  return g;
}

std::vector<double> normalization_N(std::span<const double> g_eps, double eps) {
  require(eps > 0, Errc::invalid_argument, "normalization_N: eps must be positive");
  std::vector<double> N(g_eps.size());
  for (std::size_t i = 0; i < g_eps.size(); ++i) N[i] = 1 + eps * g_eps[i] / 3;
  return N;
}

std::vector<double> gamma(std::span<const double> g_eps, double eps) {
  require(eps > 0, Errc::invalid_argument, "gamma: eps must be positive");
  std::vector<double> out(g_eps.size());
  for (std::size_t i = 0; i < g_eps.size(); ++i) {
    double z = eps * g_eps[i] / 3;
    require(z > -1, Errc::numeric, "gamma: 1 + eps g/3 must be positive");
    out[i] = 3.0 / eps * std::log1p(z);
  }
  return out;
}

double half_g2(const PhaseGrid& phase, std::span<const double> g) {
  return 0.5 * integrate(phase, g.size(), [&](std::size_t i) { return g[i] * g[i]; });
}

double entropic_metric(const PhaseGrid& phase, std::span<const double> G_eps, double eps,
                       std::span<const double> g_ref) {
  require(eps > 0, Errc::invalid_argument, "entropic_metric: eps must be positive");
  require(g_ref.size() == G_eps.size(), Errc::invalid_argument, "entropic_metric: length mismatch");
  return std::abs(entropy_H(phase, G_eps) / (eps * eps) - half_g2(phase, g_ref));
}

double l1_gap(const PhaseGrid& phase, std::span<const double> G_eps, double eps, std::span<const double> g_ref) {
  require(eps > 0, Errc::invalid_argument, "l1_gap: eps must be positive");
  require(g_ref.size() == G_eps.size(), Errc::invalid_argument, "l1_gap: length mismatch");
  return integrate(phase, G_eps.size(), [&](std::size_t i) { return std::abs((G_eps[i] - 1) / eps - g_ref[i]); });
}

double q_gap(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> G_eps, double eps,
             std::span<const double> g_ref) {
  const std::size_t nv = nv_of(phase, G_eps.size());
  require(g_ref.size() == G_eps.size(), Errc::invalid_argument, "q_gap: length mismatch");
  double total = 0;
  for (std::size_t m = 0; m < phase.cells(); ++m)
    total += phase.dx() * table.integrand_gap(G_eps.subspan(m * nv, nv), eps, g_ref.subspan(m * nv, nv));
  return total;
}

std::vector<EntropyReport> entropy_reports(const PhaseGrid& phase, const CollisionTable& table, const Trajectory& G,
                                           std::span<const double> G_in, double eps, const Trajectory* g_ref) {
  require(G.kind == StateKind::relative_density, Errc::invalid_argument, "entropy_reports needs a G trajectory");
  require(!g_ref || g_ref->snapshots.size() == G.snapshots.size(), Errc::invalid_argument,
          "entropy_reports: reference trajectory has a different number of snapshots");
  const double H_in = entropy_H(phase, G_in);
  std::vector<EntropyReport> out;
  for (std::size_t k = 0; k < G.snapshots.size(); ++k) {
    const Snapshot& s = G.snapshots[k];
    EntropyReport rep;
    rep.time = s.t;
    rep.H = entropy_H(phase, s.values);
    rep.R = dissipation_R(phase, table, s.values);
    rep.H_over_eps2 = rep.H / (eps * eps);
    rep.entropy_inequality_slack = H_in - rep.H - s.dissipation_integral;
    rep.C_in = H_in / (eps * eps);
    if (g_ref) {
      rep.half_g2 = half_g2(phase, g_ref->snapshots[k].values);
      rep.dissipation_equality_residual =
          std::abs(rep.half_g2 + g_ref->snapshots[k].dissipation_integral - half_g2(phase, g_ref->snapshots[0].values) -
                   g_ref->snapshots[0].dissipation_integral);
    }
    out.push_back(rep);
  }
  return out;
}

double dissipation_equality_residual(const PhaseGrid& phase, const Trajectory& g, std::span<const double> g_in) {
  require(g.kind == StateKind::fluctuation, Errc::invalid_argument, "dissipation equality needs a g trajectory");
  require(!g.snapshots.empty(), Errc::invalid_argument, "dissipation equality needs at least one snapshot");
  const double e0 = half_g2(phase, g_in);
  double worst = 0;
  for (const auto& s : g.snapshots) worst = std::max(worst, std::abs(half_g2(phase, s.values) + s.dissipation_integral - e0));
  return worst;
}

double dissipation_rate(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> g) {
  const std::size_t nv = nv_of(phase, g.size());
  double s = 0;
  for (std::size_t m = 0; m < phase.cells(); ++m) {
    auto c = g.subspan(m * nv, nv);
    s += phase.dx() * table.quadratic_form(c, c);
  }
  return s;
}

double dissipation_equality_residual_trapezoid(const PhaseGrid& phase, const CollisionTable& table,
                                               const Trajectory& g, std::span<const double> g_in) {
  require(g.kind == StateKind::fluctuation, Errc::invalid_argument, "dissipation equality needs a g trajectory");
  require(!g.snapshots.empty(), Errc::invalid_argument, "dissipation equality needs at least one snapshot");
  auto rate = [&](std::span<const double> u) { return dissipation_rate(phase, table, u); };
  const double e0 = half_g2(phase, g_in);
  double t_prev = 0, d_prev = rate(g_in), integral = 0, worst = 0;
  for (const auto& s : g.snapshots) {
    double d = rate(s.values);
    integral += 0.5 * (s.t - t_prev) * (d + d_prev);
    t_prev = s.t;
    d_prev = d;
    worst = std::max(worst, std::abs(half_g2(phase, s.values) + integral - e0));
  }
  return worst;
}

}  // namespace dvb
