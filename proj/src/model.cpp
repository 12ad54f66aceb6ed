#include "msad/model.hpp"

#include <algorithm>
#include <cmath>

#include "msad/quadrature.hpp"

namespace msad {

double GaussianInit::density(const Vec3& x) const {
  const Vec3 z = x - center;
  const double r2 = z.norm2();
  const double R = effective_trunc();
  if (r2 > R * R) return 0.0;
  // Normalization: Z = int_{|y|<=R} exp(-|y|^2/(2w^2)) dy, computed lazily.
  const double w = width;
  const double unnorm = std::exp(-r2 / (2 * w * w));
  // Cache-free: recompute Z each call is too slow in hot loops; callers that
  // need speed sample once onto a grid. Keep exact for correctness here.
  static thread_local double zw = -1, zr = -1, zval = 0;
  if (zw != w || zr != R) {
    auto f = [&](double r) { return r * r * std::exp(-r * r / (2 * w * w)); };
    const double hi = std::min(R, 12 * w);
    zval = 4 * kPi * integrate_gk(f, 0.0, hi, 1e-12, 1e-300).value;
    zw = w;
    zr = R;
  }
  return unnorm / zval;
}

double GaussianInit::lp_norm(double p, int d) const {
  if (d != 3) throw RuntimeFailure("GaussianInit::lp_norm: only d=3 supported");
  const double R = std::min(effective_trunc(), 12 * width);
  auto fp = [&](double r) {
    const double v = density(Vec3{center.x + r, center.y, center.z});
    return r * r * std::pow(v, p);
  };
  const double ip = 4 * kPi * integrate_gk(fp, 0.0, R, 1e-12, 1e-300).value;
  return std::pow(ip, 1.0 / p);
}

void GaussianInit::validate() const {
  if (!(width > 0)) throw InvariantViolation("initial width must be positive");
}

void SpeciesConfig::validate() const {
  // H3 asks for positive diffusion; sigma = 0 is admitted for deterministic
  // diagnostics (drift-only runs).
  if (!(sigma >= 0)) throw InvariantViolation("sigma must be nonnegative");
  init.validate();
}

double SimConfig::stability_cap() const {
  return 0.1 * std::pow(moll.epsilon, riesz.s + 2);
}

std::vector<double> SimConfig::resolved_output_times() const {
  if (!output_times.empty()) return output_times;
  return {0.0, T};
}

void SimConfig::validate() const {
  riesz.validate();
  a.validate();
  box.validate();
  if (n < 1 || static_cast<std::size_t>(n) != species.size())
    throw InvariantViolation("species count must match n");
  if (a.n != n) throw InvariantViolation("interaction matrix size must match n");
  if (N < 2) throw InvariantViolation("need at least 2 particles");
  if (!(moll.epsilon > 0)) throw InvariantViolation("epsilon must be positive");
  if (!(dt > 0)) throw InvariantViolation("dt must be positive");
  if (dt > stability_cap() * (1 + 1e-12))
    throw InvariantViolation("dt exceeds stability cap 0.1*eps^{s+2}");
  if (!(T > 0)) throw InvariantViolation("T must be positive");
  for (const auto& sp : species) sp.validate();
  for (double t : output_times)
    if (t < 0 || t > T * (1 + 1e-12))
      throw InvariantViolation("output times must lie in [0, T]");
}

std::vector<double> PdeConfig::output_times() const {
  // Geometric cadence from T down by halving, plus t = 0.
  std::vector<double> ts{0.0};
  const int k = std::max(outputs, 2);
  for (int i = k - 2; i >= 0; --i) ts.push_back(T * std::pow(0.5, i));
  return ts;
}

void PdeConfig::validate() const {
  grid.validate();
  riesz.validate();
  a.validate();
  if (a.n != static_cast<int>(species.size()))
    throw InvariantViolation("interaction matrix size must match species count");
  if (!(dt > 0) || !(T > 0)) throw InvariantViolation("dt and T must be positive");
  if (eps && !(*eps > 0)) throw InvariantViolation("epsilon must be positive");
  for (const auto& sp : species) sp.validate();
}

}  // namespace msad
