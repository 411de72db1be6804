#pragma once

#include <vector>

#include "velocity_space.hpp"

namespace dvb {

// Cutoff collision kernel b(z, sigma); depends on |z| and zhat . sigma only.
struct CollisionKernel {
  enum class Kind { maxwell_molecule, hard_sphere, tabulated };

  Kind kind = Kind::maxwell_molecule;
  double b0 = 1.0;  // maxwell_molecule
  double c = 1.0;   // hard_sphere: b = c |z|

  // tabulated: values[iz * n_mu + im] on |z| in [0, z_max], mu in [-1, 1], bilinear in between
  int n_z = 0, n_mu = 0;
  double z_max = 0;
  std::vector<double> values;

  static CollisionKernel maxwell(double b0);
  static CollisionKernel hard_sphere(double c);
  static CollisionKernel tabulated(int n_z, int n_mu, double z_max, std::vector<double> values);

  // mu = zhat . sigma; for z = 0 callers pass mu = 1.
  double eval(double z_norm, double mu) const;
  double operator()(const Vec3& z, const Vec3& sigma) const;

  // Constant C in b <= C (1 + |z|^2), valid for |z| <= z_bound.
  double bound_constant(double z_bound) const;
};

}  // namespace dvb
