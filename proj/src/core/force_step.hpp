#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "force_field.hpp"
#include "velocity_space.hpp"

namespace dvb {

// Velocity-space flow of dG/dt = -F.grad_v G over a time tau.
//
// Magnetic fields: the characteristics are rotations about B, so each node is pulled back along the
// exact rotation and G is interpolated there with tricubic Lagrange stencils (G = background outside the box).
// A correction in span{phi e^{-|v|^2/4}}, phi in {1, v, |v|^2}, then restores mass and energy and sets
// the momentum to the exactly rotated one.
// Custom fields trace characteristics backwards with midpoint RK2 and interpolate trilinearly,
// then restore mass and energy.
// The exact flows keep every functional <phi(G)>. The discrete step rescales the part W-orthogonal to
// the fixed moments so that one of them survives: H(G) for a relative density (background 1), and
// ||G||_W for a fluctuation (background 0). For a fluctuation the step is positively homogeneous, so
// it commutes with the scaling g -> eps g. A relative density falls back to the norm when the entropy
// rescaling would leave positivity.
class ForcePropagator {
 public:
  ForcePropagator(const VelocityGrid& grid, const ForceField& field);

  // G is one cell of velocity values; t is the start of the substep. `background` is the value
  // assumed outside the box: 1 for a relative density, 0 for a fluctuation.
  void apply(std::span<double> G, double t, const Vec3& x, double tau, double background = 1.0) const;

  // Pull-back stencil of a rotation by angle |w| about w (right-handed): node i reads
  // sum_s weight[64 i + s] * G[node[64 i + s]], with node -1 standing for the value 1.
  struct Stencil {
    std::vector<int> node;
    std::vector<double> weight;
  };
  std::shared_ptr<const Stencil> rotation_stencil(const Vec3& w) const;

 private:
  void apply_magnetic(std::span<double> G, double t, const Vec3& x, double tau, double background) const;
  void apply_custom(std::span<double> G, double t, const Vec3& x, double tau, double background) const;
  // ||u||_W^2 - ||P u||_W^2 with P the W-projection on span{1, v, |v|^2} (or {1, |v|^2})
  double perp_norm2(std::span<const double> G, double background, bool momentum) const;
  void restore_norm(std::span<double> G, double background, bool momentum, double target) const;
  // H(G) = <G log G - G + 1>, or -1 when G is not positive
  double entropy(std::span<const double> G) const;
  // Newton on the scale of the part beyond the fixed moments; false if it leaves positivity.
  bool restore_entropy(std::span<double> G, bool momentum, double target) const;

  const VelocityGrid* grid_;
  ForceField field_;
  std::vector<double> chi_;  // 5 x Nv correction basis
  Eigen::Matrix<double, 5, 5> chi_gram_;
  Eigen::Matrix<double, 5, 5> phi_gram_inv_;
  Eigen::Matrix2d phi2_gram_inv_;
  mutable std::mutex mu_;
  mutable std::map<Vec3, std::shared_ptr<const Stencil>> cache_;
};

}  // namespace dvb
