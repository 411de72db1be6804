#include "kernel.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace dvb {

CollisionKernel CollisionKernel::maxwell(double b0) {
  require(b0 > 0 && std::isfinite(b0), Errc::invalid_argument, "maxwell_molecule: b0 must be positive");
  CollisionKernel k;
  k.kind = Kind::maxwell_molecule;
  k.b0 = b0;
  return k;
}

CollisionKernel CollisionKernel::hard_sphere(double c) {
  require(c > 0 && std::isfinite(c), Errc::invalid_argument, "hard_sphere: c must be positive");
  CollisionKernel k;
  k.kind = Kind::hard_sphere;
  k.c = c;
  return k;
}

CollisionKernel CollisionKernel::tabulated(int n_z, int n_mu, double z_max, std::vector<double> values) {
  require(n_z >= 2 && n_mu >= 2 && z_max > 0, Errc::invalid_argument, "tabulated kernel: need n_z, n_mu >= 2 and z_max > 0");
  require(values.size() == static_cast<std::size_t>(n_z) * n_mu, Errc::invalid_argument,
          "tabulated kernel: expected n_z * n_mu values");
  for (double v : values)
    require(v >= 0 && std::isfinite(v), Errc::invalid_argument, "tabulated kernel: values must be finite and >= 0");
  CollisionKernel k;
  k.kind = Kind::tabulated;
  k.n_z = n_z;
  k.n_mu = n_mu;
  k.z_max = z_max;
  k.values = std::move(values);
  return k;
}

double CollisionKernel::eval(double z_norm, double mu) const {
  switch (kind) {
    case Kind::maxwell_molecule: return b0;
    case Kind::hard_sphere: return c * z_norm;
    case Kind::tabulated: {
      double fz = std::clamp(z_norm / z_max, 0.0, 1.0) * (n_z - 1);
      double fm = (std::clamp(mu, -1.0, 1.0) + 1.0) * 0.5 * (n_mu - 1);
      int iz = std::min(static_cast<int>(fz), n_z - 2);
      int im = std::min(static_cast<int>(fm), n_mu - 2);
      double tz = fz - iz, tm = fm - im;
      auto at = [&](int a, int b) { return values[static_cast<std::size_t>(a) * n_mu + b]; };
      return (1 - tz) * ((1 - tm) * at(iz, im) + tm * at(iz, im + 1)) +
             tz * ((1 - tm) * at(iz + 1, im) + tm * at(iz + 1, im + 1));
    }
  }
  return 0;
}

double CollisionKernel::operator()(const Vec3& z, const Vec3& sigma) const {
  double zn = std::sqrt(norm2(z));
  double mu = zn > 0 ? dot(z, sigma) / zn : 1.0;
  return eval(zn, mu);
}

double CollisionKernel::bound_constant(double /*z_bound*/) const {
  switch (kind) {
    case Kind::maxwell_molecule: return b0;
    case Kind::hard_sphere: return c;  // |z| <= 1 + |z|^2
    case Kind::tabulated: return *std::max_element(values.begin(), values.end());
  }
  return 0;
}

}  // namespace dvb
