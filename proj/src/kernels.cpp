#include "msad/kernels.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include "msad/rng.hpp"

namespace msad {

void RieszSpec::validate() const {
  if (d < 3) throw UsageError("riesz: dimension d must be >= 3");
  if (!(s > 0) || s > d - 2 + 1e-12)
    throw UsageError("riesz: singularity exponent must satisfy 0 < s <= d-2 (H2)");
}

MollifierSpec MollifierSpec::from_ell(double ell, std::uint64_t N, int d) {
  MollifierSpec m;
  m.ell = ell;
  m.N = N;
  m.d = d;
  m.epsilon = std::pow(static_cast<double>(N), -ell);
  m.validate();
  return m;
}

MollifierSpec MollifierSpec::from_eps(double eps, int d) {
  MollifierSpec m;
  m.ell = 0;
  m.N = 0;
  m.d = d;
  m.epsilon = eps;
  m.validate();
  return m;
}

void MollifierSpec::validate() const {
  if (!(epsilon > 0)) throw UsageError("mollifier: epsilon must be positive");
  if (d < 3) throw UsageError("mollifier: dimension must be >= 3");
}

double bump_unnormalized(double u) {
  if (u >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - u * u));
}

namespace {
double sphere_area(int d) {  // |S^{d-1}|
  return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}
}  // namespace

double bump_normalization(int d) {
  static std::mutex mu;
  static std::map<int, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(d);
  if (it != cache.end()) return it->second;
  auto radial = [d](double u) { return bump_unnormalized(u) * std::pow(u, d - 1); };
  QuadratureResult q = integrate_gk(radial, 0.0, 1.0, 1e-13, 1e-16);
  double c = 1.0 / (sphere_area(d) * q.value);
  cache[d] = c;
  return c;
}

double mollifier_value(double r, const MollifierSpec& spec) {
  double u = r / spec.epsilon;
  if (u >= 1.0) return 0.0;
  return bump_normalization(spec.d) * bump_unnormalized(u) / std::pow(spec.epsilon, spec.d);
}

double InteractionMatrix::max_abs() const {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double InteractionMatrix::row_abs_sum(int alpha) const {
  double m = 0;
  for (int b = 0; b < n; ++b) m += std::abs(at(alpha, b));
  return m;
}

void InteractionMatrix::validate() const {
  if (n < 1 || a.size() != static_cast<std::size_t>(n) * n)
    throw UsageError("interaction matrix: need n >= 1 and n*n entries");
  for (double v : a)
    if (!std::isfinite(v)) throw UsageError("interaction matrix: non-finite entry");
}

double riesz_potential(const Vec3& x, const RieszSpec& spec) {
  double r = x.norm();
  if (r <= 0) throw std::domain_error("riesz potential: singular point |x| = 0");
  return std::pow(r, -spec.s);
}

double auxiliary_K(const Vec3& x, double eps, double s) {
  if (!(eps > 0)) throw UsageError("auxiliary K: eps must be positive");
  double r = x.norm();
  double cap = 4.0 * eps;
  if (r >= cap) return std::pow(r, -(s + 2.0));
  return std::pow(cap, -(s + 2.0));
}

namespace {

// Angular integrals for the d = 3 radial convolution reduction.
// A_p(r, rho) = int_{-1}^{1} (r^2 + rho^2 - 2 r rho u)^{-p/2} du.
double angular_A(double p, double r, double rho) {
  double sum = r + rho, dif = std::abs(r - rho);
  if (p == 2.0) return std::log(sum / std::max(dif, 1e-300)) / (r * rho);
  double e = 2.0 - p;
  return (std::pow(sum, e) - std::pow(dif, e)) / (r * rho * e);
}

// (V * chi_eps)(r) integrand pieces; rho runs over the mollifier support.
// v(r)   = 2 pi  int_0^1 chi(u) u^2 A_s(r, eps u)                 du   (r > 0)
// g(r)   = -s pi int_0^1 chi(u) u^2 [A_s + (r^2-rho^2) A_{s+2}]/r du
// v(0)   = 4 pi eps^{-s} int_0^1 chi(u) u^{2-s} du
struct RadialConvolution {
  double s, eps, c3;  // c3: bump normalization for d = 3

  double chi(double u) const { return c3 * bump_unnormalized(u); }

  double value(double r) const {
    if (r == 0.0) {
      auto f = [this](double u) { return chi(u) * std::pow(u, 2.0 - s); };
      return 4.0 * kPi * std::pow(eps, -s) * integrate_gk(f, 0, 1, 1e-11).value;
    }
    auto f = [this, r](double u) {
      double rho = eps * u;
      return chi(u) * u * u * angular_A(s, r, rho);
    };
    std::vector<double> brk;
    if (r < eps) brk.push_back(r / eps);  // kink where the shells touch
    return 2.0 * kPi * integrate_gk_split(f, 0, 1, brk, 1e-11).value;
  }

  double slope(double r) const {
    if (r == 0.0) return 0.0;  // radial symmetry
    auto f = [this, r](double u) {
      double rho = eps * u;
      double J = 0.5 / r *
                 (angular_A(s, r, rho) + (r * r - rho * rho) * angular_A(s + 2.0, r, rho));
      return chi(u) * u * u * J;
    };
    std::vector<double> brk;
    if (r < eps) brk.push_back(r / eps);
    QuadratureResult q = integrate_gk_split(f, 0, 1, brk, 1e-11);
    if (q.error > 1e-6 * (std::abs(q.value) + 1.0))
      throw RuntimeFailure("kernel table: convolution quadrature did not converge, residual " +
                           std::to_string(q.error));
    return -s * 2.0 * kPi * q.value;
  }
};

}  // namespace

void KernelTable::finalize() {
  v_interp_ = Pchip(radii_, v_);
  g_interp_ = Pchip(radii_, g_);
  newton_r_ = (std::abs(s_ - (d_ - 2)) < 1e-12) ? eps_ * (1.0 + 1e-9) : r_max_;
}

double KernelTable::value(double r) const {
  if (r >= newton_r_ || r >= r_max_) return std::pow(r, -s_);
  return v_interp_(r);
}

double KernelTable::radial_derivative(double r) const {
  if (r >= newton_r_ || r >= r_max_) return -s_ * std::pow(r, -s_ - 1.0);
  return g_interp_(r);
}

Vec3 KernelTable::grad(const Vec3& x, double a_entry) const {
  double r2 = x.norm2();
  if (r2 <= 0 || a_entry == 0.0) return {};
  double w;
  if (r2 >= newton_r_ * newton_r_) {
    w = -s_ * std::pow(r2, -0.5 * (s_ + 2.0));
  } else {
    w = near_field_w(r2);
  }
  return x * (a_entry * w);
}

KernelTable build_kernel_table(const RieszSpec& riesz, const MollifierSpec& moll, int n_points,
                               double r_max) {
  riesz.validate();
  moll.validate();
  if (riesz.d != 3 || moll.d != 3)
    throw UsageError("kernel table: this build supports d = 3 only");
  if (n_points < 64) throw UsageError("kernel table: n_points must be >= 64");
  if (!(r_max > 2 * moll.epsilon)) throw UsageError("kernel table: r_max too small");

  KernelTable t;
  t.s_ = riesz.s;
  t.d_ = riesz.d;
  t.eps_ = moll.epsilon;
  t.r_max_ = r_max;

  const double r_min = 1e-3 * moll.epsilon;
  t.radii_.resize(n_points);
  t.radii_[0] = 0.0;
  for (int i = 1; i < n_points; ++i)
    t.radii_[i] = r_min * std::pow(r_max / r_min, double(i - 1) / double(n_points - 2));
  t.radii_.back() = r_max;

  RadialConvolution conv{riesz.s, moll.epsilon, bump_normalization(3)};
  t.v_.resize(n_points);
  t.g_.resize(n_points);
  parallel_for(n_points, [&](std::size_t i) {
    t.v_[i] = conv.value(t.radii_[i]);
    t.g_[i] = conv.slope(t.radii_[i]);
  });
  t.finalize();
  return t;
}

double measure_sup_bounds(const KernelTable& table, int k) {
  if (k != 1 && k != 2) throw UsageError("measure_sup_bounds: k must be 1 or 2");
  const auto& r = table.radii();
  const auto& g = table.g_eps();
  double sup = 0;
  if (k == 1) {
    for (double v : g) sup = std::max(sup, std::abs(v));
    return sup;
  }
  // |grad^2| proxy: radial Hessian eigenvalues g'(r) (centered differences)
  // and g(r)/r.
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    double dg = (g[i + 1] - g[i - 1]) / (r[i + 1] - r[i - 1]);
    sup = std::max(sup, std::abs(dg));
    if (r[i] > 0) sup = std::max(sup, std::abs(g[i] / r[i]));
  }
  return sup;
}

double lipschitz_surrogate_ratio(const KernelTable& table, int n_samples, std::uint64_t seed,
                                 double sample_radius) {
  NormalStream stream(seed, RngPurpose::kGeneric, 0, 0);
  const double eps = table.eps();
  double worst = 0;
  for (int i = 0; i < n_samples; ++i) {
    double n0, n1, n2, n3, n4, n5, u0, u1;
    stream.normal_pair(i, 0, n0, n1);
    stream.normal_pair(i, 1, n2, n3);
    stream.normal_pair(i, 2, n4, n5);
    u0 = stream.uniform(i, 3);
    u1 = stream.uniform(i, 4);
    Vec3 xd{n0, n1, n2}, xid{n3, n4, n5};
    double xn = xd.norm(), xin = xid.norm();
    if (xn == 0 || xin == 0) continue;
    Vec3 x = xd * (sample_radius * std::cbrt(u0) / xn);
    Vec3 xi = xid * (2.0 * eps * std::cbrt(u1) / xin);
    if (xi.norm() == 0) continue;
    Vec3 dg = table.grad(x + xi, 1.0) - table.grad(x, 1.0);
    double bound = auxiliary_K(x, eps, table.s()) * xi.norm();
    worst = std::max(worst, std::sqrt(dg.norm2()) / bound);
  }
  return worst;
}

// ---- persistence -----------------------------------------------------------

namespace {
constexpr char kMagic[6] = {'M', 'S', 'A', 'D', 'K', '1'};

void write_f64(std::ofstream& os, double v) { os.write(reinterpret_cast<char*>(&v), 8); }
void write_arr(std::ofstream& os, const std::vector<double>& a) {
  std::uint64_t n = a.size();
  os.write(reinterpret_cast<char*>(&n), 8);
  os.write(reinterpret_cast<const char*>(a.data()), 8 * n);
}
double read_f64(std::ifstream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::vector<double> read_arr(std::ifstream& is) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  if (n > (1ull << 32)) throw RuntimeFailure("kernel table file: corrupt array length");
  std::vector<double> a(n);
  is.read(reinterpret_cast<char*>(a.data()), 8 * n);
  return a;
}
}  // namespace

void KernelTable::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open for write: " + path);
  os.write(kMagic, 6);
  write_f64(os, s_);
  write_f64(os, static_cast<double>(d_));
  write_f64(os, eps_);
  write_f64(os, r_max_);
  write_arr(os, radii_);
  write_arr(os, v_);
  write_arr(os, g_);
}

KernelTable KernelTable::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open: " + path);
  char magic[6];
  is.read(magic, 6);
  if (std::memcmp(magic, kMagic, 6) != 0)
    throw RuntimeFailure("bad magic in kernel table file " + path + " at offset 0");
  KernelTable t;
  t.s_ = read_f64(is);
  t.d_ = static_cast<int>(read_f64(is));
  t.eps_ = read_f64(is);
  t.r_max_ = read_f64(is);
  t.radii_ = read_arr(is);
  t.v_ = read_arr(is);
  t.g_ = read_arr(is);
  if (!is) throw RuntimeFailure("truncated kernel table file: " + path);
  t.finalize();
  return t;
}

KernelTable kernel_table_cached(const RieszSpec& riesz, const MollifierSpec& moll, int n_points,
                                double r_max) {
  const char* env = std::getenv("MSAD_CACHE_DIR");
  std::filesystem::path dir = env ? env : ".msad-cache";
  std::filesystem::create_directories(dir);
  char name[160];
  std::snprintf(name, sizeof(name), "ktab_s%.10g_d%d_eps%.12g_n%d_r%.6g.msadk", riesz.s, riesz.d,
                moll.epsilon, n_points, r_max);
  std::filesystem::path file = dir / name;
  if (std::filesystem::exists(file)) {
    try {
      return KernelTable::load(file.string());
    } catch (const std::exception&) {
      // fall through and rebuild
    }
  }
  KernelTable t = build_kernel_table(riesz, moll, n_points, r_max);
  t.save(file.string());
  return t;
}

}  // namespace msad
