#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expr.hpp"
#include "velocity_space.hpp"

namespace dvb {

class CollisionTable;

struct ForceField {
  enum class Kind { zero, magnetic, custom };

  Kind kind = Kind::zero;
  Vec3 B{0, 0, 0};               // magnetic, when B_expr is empty
  std::optional<Expr> B_expr;    // magnetic B(t, x)
  std::optional<Expr> F_expr;    // custom F(t, x, v)
  std::optional<Expr> div_expr;  // custom div_v F(t, x, v)

  // Declared admissibility of a custom field; each flag still has to survive its validator.
  struct Declared {
    bool divergence_free = true;
    bool orthogonal = true;
    bool square_integrable = true;
  } declared;

  static ForceField zero();
  static ForceField magnetic(const Vec3& B);
  static ForceField magnetic(const Expr& B_of_t_x);
  static ForceField custom(const Expr& F, const Expr& div_F);

  Vec3 evaluate(double t, const Vec3& x, const Vec3& v) const;
  Vec3 magnetic_field(double t, const Vec3& x) const;
  double divergence(double t, const Vec3& x, const Vec3& v) const;
  bool uniform() const;  // independent of t and x
  std::string describe() const;
};

struct SamplePoint {
  double t = 0;
  Vec3 x{};
};

// nt times in [0, t_max] times nx positions in [0, 1) along x1 (a single x = 0 when nx <= 1).
std::vector<SamplePoint> sample_lattice(int nt, int nx, double t_max);

double check_orthogonality(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples);
double check_divergence(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples);
double check_square_integrability(const ForceField& f, const VelocityGrid& grid,
                                  const std::vector<SamplePoint>& samples);

struct AdmissibilityReport {
  double max_orthogonality = 0;
  double max_divergence = 0;
  double max_square_norm = 0;
  bool orthogonal = false;
  bool divergence_free = false;
  bool square_integrable = false;
  bool admissible() const { return orthogonal && divergence_free && square_integrable; }
  std::string failure() const;  // one line naming the first violated condition, empty if admissible
};

constexpr double kAdmissibilityTol = 1e-12;

AdmissibilityReport validate(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples,
                             double square_bound = 1e6);

// Residual of the relative equation at G = 1: sup over samples of <|div_v F - F.v|> plus ||Q(1,1)||_{L1(M dv)}.
double equilibrium_residual(const ForceField& f, const CollisionTable& table, const std::vector<SamplePoint>& samples);

}  // namespace dvb
