#include "force_field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "collision.hpp"
#include "error.hpp"

namespace dvb {

ForceField ForceField::zero() { return {}; }

ForceField ForceField::magnetic(const Vec3& B) {
  ForceField f;
  f.kind = Kind::magnetic;
  f.B = B;
  return f;
}

ForceField ForceField::magnetic(const Expr& B_of_t_x) {
  require(B_of_t_x.is_vector(), Errc::config, "magnetic field expression must be a vector");
  ForceField f;
  f.kind = Kind::magnetic;
  f.B_expr = B_of_t_x;
  return f;
}

ForceField ForceField::custom(const Expr& F, const Expr& div_F) {
  require(F.is_vector(), Errc::config, "custom force expression must be a vector");
  require(!div_F.is_vector(), Errc::config, "custom force divergence must be a scalar");
  ForceField f;
  f.kind = Kind::custom;
  f.F_expr = F;
  f.div_expr = div_F;
  return f;
}

Vec3 ForceField::magnetic_field(double t, const Vec3& x) const {
  if (kind != Kind::magnetic) return {0, 0, 0};
  if (B_expr) return B_expr->eval_vector({t, x, {0, 0, 0}});
  return B;
}

Vec3 ForceField::evaluate(double t, const Vec3& x, const Vec3& v) const {
  switch (kind) {
    case Kind::zero: return {0, 0, 0};
    case Kind::magnetic: return cross(v, magnetic_field(t, x));
    case Kind::custom: return F_expr->eval_vector({t, x, v});
  }
  return {0, 0, 0};
}

double ForceField::divergence(double t, const Vec3& x, const Vec3& v) const {
  switch (kind) {
    case Kind::zero:
    case Kind::magnetic: return 0.0;  // div_v (v x B) = 0
    case Kind::custom:
      require(div_expr.has_value(), Errc::config, "custom force needs an analytic divergence");
      return div_expr->eval_scalar({t, x, v});
  }
  return 0;
}

bool ForceField::uniform() const { return kind == Kind::zero || (kind == Kind::magnetic && !B_expr); }

std::string ForceField::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::zero: os << "zero"; break;
    case Kind::magnetic:
      if (B_expr)
        os << "magnetic B = " << B_expr->text();
      else
        os << "magnetic B = (" << B[0] << ", " << B[1] << ", " << B[2] << ")";
      break;
    case Kind::custom: os << "custom F = " << F_expr->text() << ", div F = " << div_expr->text(); break;
  }
  return os.str();
}

std::vector<SamplePoint> sample_lattice(int nt, int nx, double t_max) {
  std::vector<SamplePoint> out;
  nt = std::max(nt, 1);
  nx = std::max(nx, 1);
  for (int a = 0; a < nt; ++a) {
    double t = nt == 1 ? 0.0 : t_max * a / (nt - 1);
    for (int b = 0; b < nx; ++b) out.push_back({t, {nx == 1 ? 0.0 : double(b) / nx, 0, 0}});
  }
  return out;
}

double check_orthogonality(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples) {
  // (v x B) . v = 0 identically; builtin variants answer analytically
  if (f.kind != ForceField::Kind::custom) return 0.0;
  double m = 0;
  for (const auto& s : samples)
    for (const auto& v : grid.nodes) m = std::max(m, std::abs(dot(f.evaluate(s.t, s.x, v), v)));
  return m;
}

double check_divergence(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples) {
  if (f.kind != ForceField::Kind::custom) return 0.0;
  double m = 0;
  for (const auto& s : samples)
    for (const auto& v : grid.nodes) m = std::max(m, std::abs(f.divergence(s.t, s.x, v)));
  return m;
}

double check_square_integrability(const ForceField& f, const VelocityGrid& grid,
                                  const std::vector<SamplePoint>& samples) {
  if (f.kind == ForceField::Kind::zero) return 0.0;
  double m = 0;
  for (const auto& s : samples) {
    std::vector<double> sq(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) sq[i] = norm2(f.evaluate(s.t, s.x, grid.nodes[i]));
    m = std::max(m, bracket(grid, sq));
  }
  return m;
}

std::string AdmissibilityReport::failure() const {
  std::ostringstream os;
  os.precision(3);
  if (!divergence_free)
    os << "force violates div_v F = 0 (max |div_v F| = " << max_divergence << "), needed for local mass conservation";
  else if (!orthogonal)
    os << "force violates F.v = 0 (max |F.v| = " << max_orthogonality << "), needed for M to be an equilibrium";
  else if (!square_integrable)
    os << "force violates <|F|^2> < infinity (sup = " << max_square_norm
       << "), needed for the linearized limit";
  return os.str();
}

AdmissibilityReport validate(const ForceField& f, const VelocityGrid& grid, const std::vector<SamplePoint>& samples,
                             double square_bound) {
  AdmissibilityReport r;
  r.max_orthogonality = check_orthogonality(f, grid, samples);
  r.max_divergence = check_divergence(f, grid, samples);
  r.max_square_norm = check_square_integrability(f, grid, samples);
  r.orthogonal = r.max_orthogonality <= kAdmissibilityTol;
  r.divergence_free = r.max_divergence <= kAdmissibilityTol;
  r.square_integrable = std::isfinite(r.max_square_norm) && r.max_square_norm <= square_bound;
  if (f.kind == ForceField::Kind::custom) {
    r.orthogonal = r.orthogonal && f.declared.orthogonal;
    r.divergence_free = r.divergence_free && f.declared.divergence_free;
    r.square_integrable = r.square_integrable && f.declared.square_integrable;
  }
  return r;
}

double equilibrium_residual(const ForceField& f, const CollisionTable& table, const std::vector<SamplePoint>& samples) {
  const VelocityGrid& grid = table.grid();
  double force = 0;
  for (const auto& s : samples) {
    std::vector<double> r(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Vec3& v = grid.nodes[i];
      r[i] = std::abs(f.divergence(s.t, s.x, v) - dot(f.evaluate(s.t, s.x, v), v));
    }
    force = std::max(force, bracket(grid, r));
  }
  std::vector<double> one(grid.size(), 1.0);
  std::vector<double> q = table.q_nonlinear(one);
  for (double& x : q) x = std::abs(x);
  return force + bracket(grid, q);
}

}  // namespace dvb
