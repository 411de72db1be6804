#pragma once

#include <memory>
#include <span>
#include <vector>

#include "collision.hpp"
#include "force_field.hpp"
#include "force_step.hpp"
#include "velocity_space.hpp"

namespace dvb {

struct PhaseGrid {
  enum class Mode { homogeneous, torus_1d };

  Mode mode = Mode::homogeneous;
  int n_x = 1;  // cells on the unit torus (1 when homogeneous)
  VelocityGrid velocity;

  std::size_t cells() const { return static_cast<std::size_t>(n_x); }
  double dx() const { return 1.0 / n_x; }
  Vec3 position(std::size_t m) const { return {mode == Mode::homogeneous ? 0.0 : double(m) / n_x, 0, 0}; }
};

PhaseGrid make_homogeneous(VelocityGrid v);
PhaseGrid make_torus(VelocityGrid v, int n_x);

enum class StateKind { relative_density, fluctuation };

struct State {
  StateKind kind = StateKind::relative_density;
  double time = 0;
  std::vector<double> values;  // cell-major: values[m * Nv + i]
  // running time integral of the dissipation (R for G, <g, L g> for g), x-integrated
  double dissipation_integral = 0;

  std::span<double> cell(std::size_t m, std::size_t nv) { return {values.data() + m * nv, nv}; }
  std::span<const double> cell(std::size_t m, std::size_t nv) const { return {values.data() + m * nv, nv}; }
};

enum class Advection { spectral, upwind2 };
enum class Integrator { explicit_rk2, explicit_rk4, semi_implicit_euler };

struct SolverConfig {
  double dt = 0.01;
  Advection advection = Advection::spectral;
  Integrator integrator = Integrator::explicit_rk2;
  double positivity_floor = 1e-30;
};

struct Snapshot {
  double t = 0;
  std::vector<double> values;
  double dissipation_integral = 0;
};

struct Trajectory {
  StateKind kind = StateKind::relative_density;
  std::vector<Snapshot> snapshots;
};

class Solver {
 public:
  // Refuses inadmissible fields (validated on `samples`, default lattice when empty) and unstable dt.
  Solver(PhaseGrid phase, const CollisionTable& table, ForceField field, SolverConfig cfg,
         std::vector<SamplePoint> samples = {});
  Solver(const Solver&) = delete;
  Solver& operator=(const Solver&) = delete;

  const PhaseGrid& phase() const { return phase_; }
  const SolverConfig& config() const { return cfg_; }
  const CollisionTable& table() const { return *table_; }
  const ForceField& field() const { return field_; }

  // Largest stable dt of the collision substep.
  double collision_dt_limit() const;

  void step_nonlinear(State& s) const;
  void step_linearized(State& s) const;
  void step(State& s) const;

  // Snapshots at the requested times, which must be multiples of dt from the initial time.
  Trajectory evolve(const State& initial, std::span<const double> times) const;

  // Substeps, public for tests.
  void transport(State& s, double tau) const;
  void force(State& s, double t, double tau) const;
  void collide_nonlinear(std::span<double> G, double& dissipation) const;
  void collide_linear(std::span<double> g, double& dissipation) const;
  void floor_positivity(std::span<double> G) const;

 private:
  void build_transport();

  PhaseGrid phase_;
  const CollisionTable* table_;
  ForceField field_;
  SolverConfig cfg_;
  std::unique_ptr<ForcePropagator> prop_;
  std::vector<std::vector<double>> shift_;  // spectral half-step shift per v1 index, n_x x n_x row-major
};

State make_state(const PhaseGrid& phase, StateKind kind, std::span<const double> per_cell_values);

struct MomentLawReport {
  std::vector<double> t;
  std::vector<double> mass, momentum, energy;  // residual per interior snapshot, max over cells
  double max_mass = 0, max_momentum = 0, max_energy = 0;
};

// Residuals of d/dt<G> + dx<v1 G> = 0, d/dt<vG> + dx<v1 v G> = <F G>,
// d/dt<|v|^2 G/2> + dx<v1 |v|^2 G/2> = <F.v G>, time derivatives by centred differences.
MomentLawReport moment_laws(const PhaseGrid& phase, const Trajectory& traj, const ForceField& field);

struct Moments {
  double mass = 0;
  Vec3 momentum{};
  double energy = 0;  // <|v|^2 G>
};

// x-integrated moments of one snapshot
Moments total_moments(const PhaseGrid& phase, std::span<const double> values);

}  // namespace dvb
