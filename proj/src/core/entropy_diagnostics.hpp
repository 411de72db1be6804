#pragma once

#include <span>
#include <vector>

#include "collision.hpp"
#include "kinetic_solver.hpp"

namespace dvb {

// h(z) = (1+z) log(1+z) - z, with h(-1) = 1
double h(double z);
// r(z) = z log(1+z)
double r(double z);

// H(G) = int <G log G - G + 1> dx
double entropy_H(const PhaseGrid& phase, std::span<const double> G);
// R(G) summed over cells with weight dx
double dissipation_R(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> G);

std::vector<double> fluctuation(std::span<const double> G, double eps);
std::vector<double> normalization_N(std::span<const double> g_eps, double eps);
std::vector<double> gamma(std::span<const double> g_eps, double eps);  // (3/eps) log(1 + eps g/3)

// 1/2 int <g^2> dx
double half_g2(const PhaseGrid& phase, std::span<const double> g);
// | H(G_eps)/eps^2 - 1/2 int <g_ref^2> dx |
double entropic_metric(const PhaseGrid& phase, std::span<const double> G_eps, double eps, std::span<const double> g_ref);
// int <|g_eps - g_ref|> dx
double l1_gap(const PhaseGrid& phase, std::span<const double> G_eps, double eps, std::span<const double> g_ref);
// int || q_eps/N_eps - q(g_ref) ||_{L1(dmu)} dx
double q_gap(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> G_eps, double eps,
             std::span<const double> g_ref);

struct EntropyReport {
  double time = 0;
  double H = 0;
  double R = 0;
  double H_over_eps2 = 0;
  double half_g2 = 0;
  double entropy_inequality_slack = 0;  // H(G_in) - H(G(t)) - int_0^t R
  double dissipation_equality_residual = 0;
  double C_in = 0;  // H(G_in) / eps^2
};

// One report per snapshot of a G trajectory started from G_in; g_ref (may be empty) is the linearized
// solution at the same snapshots.
std::vector<EntropyReport> entropy_reports(const PhaseGrid& phase, const CollisionTable& table, const Trajectory& G,
                                           std::span<const double> G_in, double eps, const Trajectory* g_ref = nullptr);

// max over snapshots of | 1/2 int <g^2>(t) + int_0^t <g, L g> ds - 1/2 int <g_in^2> |, with the time
// integral accumulated by the integrator (Trajectory::dissipation_integral).
double dissipation_equality_residual(const PhaseGrid& phase, const Trajectory& g, std::span<const double> g_in);

// int <g, L g> dx over the phase grid
double dissipation_rate(const PhaseGrid& phase, const CollisionTable& table, std::span<const double> g);

// Same balance with the time integral by the trapezoid rule on snapshots of <g, L g>.
double dissipation_equality_residual_trapezoid(const PhaseGrid& phase, const CollisionTable& table,
                                               const Trajectory& g, std::span<const double> g_in);

}  // namespace dvb
