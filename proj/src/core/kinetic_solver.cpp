#include "kinetic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "error.hpp"

namespace dvb {

PhaseGrid make_homogeneous(VelocityGrid v) {
  PhaseGrid p;
  p.mode = PhaseGrid::Mode::homogeneous;
  p.n_x = 1;
  p.velocity = std::move(v);
  return p;
}

PhaseGrid make_torus(VelocityGrid v, int n_x) {
  require(n_x >= 3, Errc::invalid_argument, "torus needs at least 3 cells");
  PhaseGrid p;
  p.mode = PhaseGrid::Mode::torus_1d;
  p.n_x = n_x;
  p.velocity = std::move(v);
  return p;
}

State make_state(const PhaseGrid& phase, StateKind kind, std::span<const double> values) {
  const std::size_t nv = phase.velocity.size();
  require(values.size() == nv * phase.cells(), Errc::invalid_argument, "state: expected cells x velocity values");
  State s;
  s.kind = kind;
  s.values.assign(values.begin(), values.end());
  if (kind == StateKind::relative_density)
    for (double v : s.values) require(v >= 0, Errc::invalid_argument, "relative density must be nonnegative");
  return s;
}

namespace {

double limit_for(Integrator in) {
  switch (in) {
    case Integrator::explicit_rk2: return 2.0;
    case Integrator::explicit_rk4: return 2.78;
    case Integrator::semi_implicit_euler: return std::numeric_limits<double>::infinity();
  }
  return 0;
}

double wdot(const VelocityGrid& g, std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += g.weights[i] * a[i] * b[i];
  return s;
}

// periodic band-limited interpolation kernel on N (odd) equispaced points of [0, 1)
double dirichlet(int N, double y) {
  double s = std::sin(std::numbers::pi * y);
  if (std::abs(s) < 1e-300) return std::cos(std::numbers::pi * y * (N - 1)) >= 0 ? 1.0 : -1.0;
  return std::sin(N * std::numbers::pi * y) / (N * s);
}

}  // namespace

Solver::Solver(PhaseGrid phase, const CollisionTable& table, ForceField field, SolverConfig cfg,
               std::vector<SamplePoint> samples)
    : phase_(std::move(phase)), table_(&table), field_(std::move(field)), cfg_(cfg) {
  require(cfg_.dt > 0 && std::isfinite(cfg_.dt), Errc::config, "dt must be positive");
  require(cfg_.positivity_floor >= 0, Errc::config, "positivity_floor must be >= 0");
  require(table.grid().size() == phase_.velocity.size() && table.grid().n == phase_.velocity.n, Errc::invalid_argument,
          "solver: collision table and phase grid disagree");
  if (samples.empty()) samples = sample_lattice(5, phase_.mode == PhaseGrid::Mode::homogeneous ? 1 : 5, 1.0);
  AdmissibilityReport rep = validate(field_, phase_.velocity, samples);
  require(rep.admissible(), Errc::inadmissible_force, rep.failure());

  const double lim = collision_dt_limit();
  if (cfg_.dt > lim) {
    std::ostringstream os;
    os << "dt = " << cfg_.dt << " exceeds the collision stability limit " << lim << " of the explicit integrator";
    fail(Errc::unstable, os.str());
  }
  if (phase_.mode == PhaseGrid::Mode::torus_1d) {
    if (cfg_.advection == Advection::upwind2) {
      double c = phase_.velocity.coord(phase_.velocity.n - 1) * 0.5 * cfg_.dt / phase_.dx();
      if (c > 1.0) {
        std::ostringstream os;
        os << "CFL number " << c << " > 1 for upwind transport";
        fail(Errc::unstable, os.str());
      }
    } else {
      require(phase_.n_x % 2 == 1, Errc::config, "spectral transport needs an odd number of cells");
    }
    build_transport();
  }
  prop_ = std::make_unique<ForcePropagator>(phase_.velocity, field_);
}

double Solver::collision_dt_limit() const {
  double lim = limit_for(cfg_.integrator);
  if (!std::isfinite(lim)) return lim;
  return lim / table_->stiffness_bound();
}

void Solver::build_transport() {
  if (cfg_.advection != Advection::spectral) return;
  const int N = phase_.n_x;
  const int n = phase_.velocity.n;
  shift_.assign(n, std::vector<double>(static_cast<std::size_t>(N) * N));
  for (int a = 0; a < n; ++a) {
    double s = phase_.velocity.coord(a) * 0.5 * cfg_.dt;
    for (int m = 0; m < N; ++m)
      for (int p = 0; p < N; ++p) shift_[a][m * N + p] = dirichlet(N, double(m - p) / N - s);
  }
}

void Solver::transport(State& s, double tau) const {
  if (phase_.mode == PhaseGrid::Mode::homogeneous) return;
  const VelocityGrid& vg = phase_.velocity;
  const int N = phase_.n_x;
  const std::size_t nv = vg.size();
  std::vector<double> line(N), out(N);
  for (std::size_t i = 0; i < nv; ++i) {
    const int a = static_cast<int>(i % vg.n);
    for (int m = 0; m < N; ++m) line[m] = s.values[m * nv + i];
    if (cfg_.advection == Advection::spectral) {
      require(std::abs(tau - 0.5 * cfg_.dt) <= 1e-15 * cfg_.dt, Errc::invalid_argument,
              "spectral transport is built for half steps");
      const double* T = shift_[a].data();
      for (int m = 0; m < N; ++m) {
        double acc = 0;
        for (int p = 0; p < N; ++p) acc += T[m * N + p] * line[p];
        out[m] = acc;
      }
    } else {
      double c = vg.coord(a) * tau / phase_.dx();
      int dir = c >= 0 ? 1 : -1;
      double ac = std::abs(c);
      for (int m = 0; m < N; ++m) {
        double u0 = line[m], u1 = line[(m - dir + N) % N], u2 = line[(m - 2 * dir + 2 * N) % N];
        out[m] = u0 - 0.5 * ac * (3 * u0 - 4 * u1 + u2) + 0.5 * ac * ac * (u0 - 2 * u1 + u2);
      }
    }
    for (int m = 0; m < N; ++m) s.values[m * nv + i] = out[m];
  }
}

void Solver::force(State& s, double t, double tau) const {
  if (field_.kind == ForceField::Kind::zero) return;
  const std::size_t nv = phase_.velocity.size();
  const double bg = s.kind == StateKind::relative_density ? 1.0 : 0.0;
  for (std::size_t m = 0; m < phase_.cells(); ++m) prop_->apply(s.cell(m, nv), t, phase_.position(m), tau, bg);
}

void Solver::floor_positivity(std::span<double> G) const {
  const double fl = cfg_.positivity_floor;
  bool low = false;
  for (double v : G) low = low || v < fl;
  if (!low) return;
  const VelocityGrid& vg = phase_.velocity;
  double before = bracket(vg, G);
  for (double& v : G) v = std::max(v, fl);
  double after = bracket(vg, G);
  require(before > 0, Errc::numeric, "negative mass after positivity flooring");
  const double scale = before / after;
  for (double& v : G) v *= scale;
}

void Solver::collide_nonlinear(std::span<double> G, double& dissipation) const {
  const CollisionTable& T = *table_;
  const VelocityGrid& vg = phase_.velocity;
  const double dt = cfg_.dt;
  const std::size_t nv = G.size();
  std::vector<double> y(nv);
  switch (cfg_.integrator) {
    case Integrator::explicit_rk2: {
      double r1, r2;
      auto k1 = T.q_nonlinear(G, &r1);
      for (std::size_t i = 0; i < nv; ++i) y[i] = G[i] + dt * k1[i];
      auto k2 = T.q_nonlinear(y, &r2);
      for (std::size_t i = 0; i < nv; ++i) G[i] += 0.5 * dt * (k1[i] + k2[i]);
      dissipation += 0.5 * dt * (r1 + r2);
      return;
    }
    case Integrator::explicit_rk4: {
      double r[4];
      auto k1 = T.q_nonlinear(G, &r[0]);
      for (std::size_t i = 0; i < nv; ++i) y[i] = G[i] + 0.5 * dt * k1[i];
      auto k2 = T.q_nonlinear(y, &r[1]);
      for (std::size_t i = 0; i < nv; ++i) y[i] = G[i] + 0.5 * dt * k2[i];
      auto k3 = T.q_nonlinear(y, &r[2]);
      for (std::size_t i = 0; i < nv; ++i) y[i] = G[i] + dt * k3[i];
      auto k4 = T.q_nonlinear(y, &r[3]);
      for (std::size_t i = 0; i < nv; ++i) G[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      dissipation += dt / 6.0 * (r[0] + 2 * r[1] + 2 * r[2] + r[3]);
      return;
    }
    case Integrator::semi_implicit_euler: {
      // (I + dt L) delta = dt Q(G): the linearized part is taken implicitly
      double r0;
      auto q = T.q_nonlinear(G, &r0);
      std::vector<double> b(nv);
      for (std::size_t i = 0; i < nv; ++i) b[i] = dt * q[i];
      std::vector<double> x = b, rres(nv), p(nv), Ap(nv);
      auto apply = [&](std::span<const double> u, std::vector<double>& out) {
        auto Lu = T.linearized(u);
        for (std::size_t i = 0; i < nv; ++i) out[i] = u[i] + dt * Lu[i];
      };
      apply(x, Ap);
      for (std::size_t i = 0; i < nv; ++i) rres[i] = b[i] - Ap[i];
      p = rres;
      double rr = wdot(vg, rres, rres);
      const double stop = 1e-28 * std::max(wdot(vg, b, b), 1e-300);
      for (int it = 0; it < 200 && rr > stop; ++it) {
        apply(p, Ap);
        double alpha = rr / wdot(vg, p, Ap);
        for (std::size_t i = 0; i < nv; ++i) {
          x[i] += alpha * p[i];
          rres[i] -= alpha * Ap[i];
        }
        double rr2 = wdot(vg, rres, rres);
        for (std::size_t i = 0; i < nv; ++i) p[i] = rres[i] + (rr2 / rr) * p[i];
        rr = rr2;
      }
      for (std::size_t i = 0; i < nv; ++i) G[i] += x[i];
      dissipation += dt * r0;
      return;
    }
  }
}

void Solver::collide_linear(std::span<double> g, double& dissipation) const {
  const CollisionTable& T = *table_;
  const VelocityGrid& vg = phase_.velocity;
  const double dt = cfg_.dt;
  const std::size_t nv = g.size();
  std::vector<double> y(nv);
  switch (cfg_.integrator) {
    case Integrator::explicit_rk2: {
      auto k1 = T.linearized(g);
      for (std::size_t i = 0; i < nv; ++i) y[i] = g[i] - dt * k1[i];
      auto k2 = T.linearized(y);
      double d1 = wdot(vg, g, k1), d2 = wdot(vg, y, k2);
      for (std::size_t i = 0; i < nv; ++i) g[i] -= 0.5 * dt * (k1[i] + k2[i]);
      dissipation += 0.5 * dt * (d1 + d2);
      return;
    }
    case Integrator::explicit_rk4: {
      auto k1 = T.linearized(g);
      double d[4];
      d[0] = wdot(vg, g, k1);
      for (std::size_t i = 0; i < nv; ++i) y[i] = g[i] - 0.5 * dt * k1[i];
      auto k2 = T.linearized(y);
      d[1] = wdot(vg, y, k2);
      for (std::size_t i = 0; i < nv; ++i) y[i] = g[i] - 0.5 * dt * k2[i];
      auto k3 = T.linearized(y);
      d[2] = wdot(vg, y, k3);
      for (std::size_t i = 0; i < nv; ++i) y[i] = g[i] - dt * k3[i];
      auto k4 = T.linearized(y);
      d[3] = wdot(vg, y, k4);
      for (std::size_t i = 0; i < nv; ++i) g[i] -= dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      dissipation += dt / 6.0 * (d[0] + 2 * d[1] + 2 * d[2] + d[3]);
      return;
    }
    case Integrator::semi_implicit_euler: {
      // (I + dt L) g_new = g by conjugate gradients in the W inner product
      std::vector<double> b(g.begin(), g.end());
      std::vector<double> x = b, r(nv), p(nv), Ap(nv);
      auto apply = [&](std::span<const double> u, std::vector<double>& out) {
        auto Lu = T.linearized(u);
        for (std::size_t i = 0; i < nv; ++i) out[i] = u[i] + dt * Lu[i];
      };
      apply(x, Ap);
      for (std::size_t i = 0; i < nv; ++i) r[i] = b[i] - Ap[i];
      p = r;
      double rr = wdot(vg, r, r);
      const double stop = 1e-28 * std::max(wdot(vg, b, b), 1e-300);
      for (int it = 0; it < 200 && rr > stop; ++it) {
        apply(p, Ap);
        double alpha = rr / wdot(vg, p, Ap);
        for (std::size_t i = 0; i < nv; ++i) {
          x[i] += alpha * p[i];
          r[i] -= alpha * Ap[i];
        }
        double rr2 = wdot(vg, r, r);
        for (std::size_t i = 0; i < nv; ++i) p[i] = r[i] + (rr2 / rr) * p[i];
        rr = rr2;
      }
      // L g_new = (g - g_new) / dt
      double d = 0;
      for (std::size_t i = 0; i < nv; ++i) d += vg.weights[i] * x[i] * (b[i] - x[i]);
      std::copy(x.begin(), x.end(), g.begin());
      dissipation += d;
      return;
    }
  }
}

void Solver::step_nonlinear(State& s) const {
  require(s.kind == StateKind::relative_density, Errc::invalid_argument, "step_nonlinear needs a relative density");
  const std::size_t nv = phase_.velocity.size();
  const double dt = cfg_.dt, t = s.time;
  transport(s, 0.5 * dt);
  force(s, t, 0.5 * dt);
  double diss = 0;
  for (std::size_t m = 0; m < phase_.cells(); ++m) {
    double dm = 0;
    collide_nonlinear(s.cell(m, nv), dm);
    diss += phase_.dx() * dm;
  }
  force(s, t + 0.5 * dt, 0.5 * dt);
  transport(s, 0.5 * dt);
  for (std::size_t m = 0; m < phase_.cells(); ++m) floor_positivity(s.cell(m, nv));
  s.dissipation_integral += diss;
  s.time = t + dt;
}

void Solver::step_linearized(State& s) const {
  require(s.kind == StateKind::fluctuation, Errc::invalid_argument, "step_linearized needs a fluctuation");
  const std::size_t nv = phase_.velocity.size();
  const double dt = cfg_.dt, t = s.time;
  transport(s, 0.5 * dt);
  force(s, t, 0.5 * dt);
  double diss = 0;
  for (std::size_t m = 0; m < phase_.cells(); ++m) {
    double dm = 0;
    collide_linear(s.cell(m, nv), dm);
    diss += phase_.dx() * dm;
  }
  force(s, t + 0.5 * dt, 0.5 * dt);
  transport(s, 0.5 * dt);
  s.dissipation_integral += diss;
  s.time = t + dt;
}

void Solver::step(State& s) const {
  if (s.kind == StateKind::relative_density)
    step_nonlinear(s);
  else
    step_linearized(s);
}

Trajectory Solver::evolve(const State& initial, std::span<const double> times) const {
  require(initial.values.size() == phase_.cells() * phase_.velocity.size(), Errc::invalid_argument,
          "evolve: state does not match the phase grid");
  const double dt = cfg_.dt, t0 = initial.time;
  std::vector<long> marks;
  long prev = 0;
  for (double t : times) {
    double k = (t - t0) / dt;
    long kr = std::lround(k);
    if (kr < 0 || std::abs(kr * dt - (t - t0)) > 1e-9 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "snapshot time " << t << " is not a multiple of dt = " << dt << " after t0 = " << t0;
      fail(Errc::config, os.str());
    }
    require(kr >= prev, Errc::config, "snapshot times must be nondecreasing");
    prev = kr;
    marks.push_back(kr);
  }
  Trajectory tr;
  tr.kind = initial.kind;
  State s = initial;
  long done = 0;
  for (long target : marks) {
    while (done < target) {
      step(s);
      ++done;
      s.time = t0 + done * dt;
    }
    tr.snapshots.push_back({s.time, s.values, s.dissipation_integral});
  }
  return tr;
}

Moments total_moments(const PhaseGrid& phase, std::span<const double> values) {
  const VelocityGrid& vg = phase.velocity;
  const std::size_t nv = vg.size();
  Moments mo;
  for (std::size_t m = 0; m < phase.cells(); ++m) {
    std::span<const double> G = values.subspan(m * nv, nv);
    std::vector<double> tmp(nv);
    mo.mass += phase.dx() * bracket(vg, G);
    for (int a = 0; a < 3; ++a) {
      for (std::size_t i = 0; i < nv; ++i) tmp[i] = vg.nodes[i][a] * G[i];
      mo.momentum[a] += phase.dx() * bracket(vg, tmp);
    }
    for (std::size_t i = 0; i < nv; ++i) tmp[i] = norm2(vg.nodes[i]) * G[i];
    mo.energy += phase.dx() * bracket(vg, tmp);
  }
  return mo;
}

MomentLawReport moment_laws(const PhaseGrid& phase, const Trajectory& traj, const ForceField& field) {
  const auto& sn = traj.snapshots;
  require(traj.kind == StateKind::relative_density, Errc::invalid_argument, "moment_laws needs a G trajectory");
  require(sn.size() >= 3, Errc::invalid_argument, "moment_laws needs at least 3 snapshots");
  const double h = sn[1].t - sn[0].t;
  for (std::size_t k = 1; k < sn.size(); ++k)
    require(std::abs((sn[k].t - sn[k - 1].t) - h) <= 1e-9 * std::max(1.0, h), Errc::invalid_argument,
            "moment_laws needs equally spaced snapshots");
  require(h > 0, Errc::invalid_argument, "moment_laws needs distinct snapshot times");

  const VelocityGrid& vg = phase.velocity;
  const std::size_t nv = vg.size(), nc = phase.cells();
  // per snapshot, per cell: density (1), momentum (3), energy/2 (1), and their x-fluxes, and force sources
  struct Cell {
    double q[5];
    double flux[5];
    double src[5];
  };
  std::vector<std::vector<Cell>> data(sn.size(), std::vector<Cell>(nc));
  for (std::size_t k = 0; k < sn.size(); ++k)
    for (std::size_t m = 0; m < nc; ++m) {
      Cell c{};
      const double* G = sn[k].values.data() + m * nv;
      Vec3 x = phase.position(m);
      for (std::size_t i = 0; i < nv; ++i) {
        const Vec3& v = vg.nodes[i];
        const double w = vg.weights[i] * G[i];
        const double e = 0.5 * norm2(v);
        const double phi[5] = {1.0, v[0], v[1], v[2], e};
        Vec3 F = field.evaluate(sn[k].t, x, v);
        const double srcphi[5] = {0.0, F[0], F[1], F[2], dot(F, v)};
        for (int a = 0; a < 5; ++a) {
          c.q[a] += w * phi[a];
          c.flux[a] += w * v[0] * phi[a];
          c.src[a] += w * srcphi[a];
        }
      }
      data[k][m] = c;
    }

  const bool fourth = sn.size() >= 5;
  const std::size_t lo = fourth ? 2 : 1, hi = sn.size() - lo;
  MomentLawReport rep;
  for (std::size_t k = lo; k < hi; ++k) {
    double rm = 0, rp = 0, re = 0;
    for (std::size_t m = 0; m < nc; ++m) {
      double res[5];
      for (int a = 0; a < 5; ++a) {
        double dt;
        if (fourth)
          dt = (-data[k + 2][m].q[a] + 8 * data[k + 1][m].q[a] - 8 * data[k - 1][m].q[a] + data[k - 2][m].q[a]) /
               (12 * h);
        else
          dt = (data[k + 1][m].q[a] - data[k - 1][m].q[a]) / (2 * h);
        double dx = 0;
        if (phase.mode == PhaseGrid::Mode::torus_1d) {
          // spectral derivative of the flux on the unit torus (odd n_x), centred difference otherwise
          const int N = phase.n_x;
          if (N % 2 == 1) {
            for (int p = 0; p < N; ++p) {
              if (p == static_cast<int>(m)) continue;
              double y = double(static_cast<int>(m) - p) / N;
              double dk = std::numbers::pi * std::cos(N * std::numbers::pi * y) / std::sin(std::numbers::pi * y);
              dx += dk * data[k][p].flux[a];
            }
          } else {
            dx = (data[k][(m + 1) % N].flux[a] - data[k][(m + N - 1) % N].flux[a]) * 0.5 * N;
          }
        }
        res[a] = dt + dx - data[k][m].src[a];
      }
      rm = std::max(rm, std::abs(res[0]));
      rp = std::max({rp, std::abs(res[1]), std::abs(res[2]), std::abs(res[3])});
      re = std::max(re, std::abs(res[4]));
    }
    rep.t.push_back(sn[k].t);
    rep.mass.push_back(rm);
    rep.momentum.push_back(rp);
    rep.energy.push_back(re);
    rep.max_mass = std::max(rep.max_mass, rm);
    rep.max_momentum = std::max(rep.max_momentum, rp);
    rep.max_energy = std::max(rep.max_energy, re);
  }
  return rep;
}

}  // namespace dvb
