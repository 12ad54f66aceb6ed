#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msad/common.hpp"
#include "msad/quadrature.hpp"

namespace msad {

// Riesz potential V(x) = |x|^{-s}, 0 < s <= d-2, d >= 3. s = d-2 is the
// Coulomb/Newtonian case.
struct RieszSpec {
  double s = 1.0;
  int d = 3;

  void validate() const;
};

// Compactly supported radial bump chi(x) = c_d exp(-1/(1-|x|^2)) on B_1,
// normalized to a probability density; chi_eps(x) = eps^{-d} chi(x/eps).
struct MollifierSpec {
  double ell = 0.1;     // scaling exponent, eps = N^{-ell}
  std::uint64_t N = 0;  // particle count per species (0: eps given directly)
  double epsilon = 0;
  int d = 3;

  static MollifierSpec from_ell(double ell, std::uint64_t N, int d = 3);
  static MollifierSpec from_eps(double eps, int d = 3);
  void validate() const;
};

// chi and chi_eps as radial profiles.
double bump_unnormalized(double u);           // exp(-1/(1-u^2)) on [0,1)
double bump_normalization(int d);             // c_d, cached per dimension
double mollifier_value(double r, const MollifierSpec& spec);

struct InteractionMatrix {
  int n = 1;
  std::vector<double> a;  // row-major n*n; a>0 repulsive, a<0 attractive

  double at(int alpha, int beta) const { return a[alpha * n + beta]; }
  double max_abs() const;
  double row_abs_sum(int alpha) const;
  void validate() const;
};

// Radial profile of the mollified potential V*chi_eps and its radial
// derivative, tabulated once per (s, d, eps) and interpolated in the force
// loops. Immutable after construction; evaluation is pure and thread-safe.
class KernelTable {
 public:
  KernelTable() = default;

  double s() const { return s_; }
  int d() const { return d_; }
  double eps() const { return eps_; }
  double r_max() const { return r_max_; }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& v_eps() const { return v_; }
  const std::vector<double>& g_eps() const { return g_; }

  // Potential profile (V*chi_eps)(r); unscaled by coupling constants.
  double value(double r) const;
  // Radial derivative d/dr (V*chi_eps)(r).
  double radial_derivative(double r) const;

  // a * grad(V*chi_eps)(x); zero vector at x = 0. Beyond the Newton radius
  // the unmollified closed form a*(-s)|x|^{-s-2} x is exact.
  Vec3 grad(const Vec3& x, double a_entry) const;

  // Radius beyond which the closed form is used: eps when s = d-2
  // (Newton's theorem, exact), else r_max.
  double newton_radius() const { return newton_r_; }
  double newton_radius2() const { return newton_r_ * newton_r_; }

  // Hot-path helper for the force loop: returns w such that the gradient
  // contribution is w * x, given r2 = |x|^2 < newton_radius2(). a applied
  // by the caller.
  double near_field_w(double r2) const {
    if (r2 <= 0) return 0.0;
    double r = std::sqrt(r2);
    return g_interp_(r) / r;
  }

  void save(const std::string& path) const;
  static KernelTable load(const std::string& path);

  friend KernelTable build_kernel_table(const RieszSpec&, const MollifierSpec&, int, double);

 private:
  double s_ = 0, eps_ = 0, r_max_ = 0, newton_r_ = 0;
  int d_ = 3;
  std::vector<double> radii_, v_, g_;
  Pchip v_interp_, g_interp_;
  void finalize();
};

// Builds the radial profile by adaptive Gauss-Kronrod quadrature of the
// convolution integral (d = 3 reduction with analytic angular part).
// r_max = 8 box half-widths by convention of the callers; here a plain
// length parameter.
KernelTable build_kernel_table(const RieszSpec& riesz, const MollifierSpec& moll,
                               int n_points = 1024, double r_max = 96.0);

// Caches tables under MSAD_CACHE_DIR (default: .msad-cache), keyed by
// (s, d, eps, n_points, r_max).
KernelTable kernel_table_cached(const RieszSpec& riesz, const MollifierSpec& moll,
                                int n_points = 1024, double r_max = 96.0);

double riesz_potential(const Vec3& x, const RieszSpec& spec);

// Capped power |x|^{-(s+2)} plateaued below radius 4 eps; dominates the
// modulus of continuity of grad V_eps.
double auxiliary_K(const Vec3& x, double eps, double s);

// Measured sup over the table of |grad^k V_eps| for k = 1, 2 (k = 2 via
// finite differences of g_eps and the tangential part g/r).
double measure_sup_bounds(const KernelTable& table, int k);

// Largest observed ratio |grad V_eps(x+xi) - grad V_eps(x)| / (K_eps(x)|xi|)
// over n_samples random pairs with |xi| <= 2 eps; used to fit C3.
double lipschitz_surrogate_ratio(const KernelTable& table, int n_samples, std::uint64_t seed,
                                 double sample_radius);

}  // namespace msad
