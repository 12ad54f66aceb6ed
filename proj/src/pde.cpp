#include "msad/pde.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace msad {
namespace {

// FFTW plan creation is not thread-safe; execution on private buffers is.
std::mutex& fftw_mutex() {
  static std::mutex mu;
  return mu;
}

// Real-to-complex 3D transform pair on an m^3 cube with private buffers.
class Fft3 {
 public:
  explicit Fft3(int m) : m_(m), nreal_(static_cast<std::size_t>(m) * m * m),
                         ncplx_(static_cast<std::size_t>(m) * m * (m / 2 + 1)) {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    real_ = fftw_alloc_real(nreal_);
    cplx_ = fftw_alloc_complex(ncplx_);
    fwd_ = fftw_plan_dft_r2c_3d(m, m, m, real_, cplx_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_3d(m, m, m, cplx_, real_, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw RuntimeFailure("fftw plan creation failed");
  }
  ~Fft3() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(cplx_);
  }
  Fft3(const Fft3&) = delete;
  Fft3& operator=(const Fft3&) = delete;

  std::size_t ncplx() const { return ncplx_; }

  void forward(const double* in, fftw_complex* out) {
    std::memcpy(real_, in, nreal_ * sizeof(double));
    fftw_execute(fwd_);
    std::memcpy(out, cplx_, ncplx_ * sizeof(fftw_complex));
  }
  // Unnormalized inverse; caller applies scale (typically 1/m^3).
  void backward(const fftw_complex* in, double* out, double scale) {
    std::memcpy(cplx_, in, ncplx_ * sizeof(fftw_complex));
    fftw_execute(bwd_);
    for (std::size_t i = 0; i < nreal_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int m_;
  std::size_t nreal_, ncplx_;
  double* real_;
  fftw_complex* cplx_;
  fftw_plan fwd_, bwd_;
};

using CplxVec = std::vector<std::array<double, 2>>;

void multiply_into(const fftw_complex* a, const fftw_complex* b, fftw_complex* out,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double re = a[i][0] * b[i][0] - a[i][1] * b[i][1];
    const double im = a[i][0] * b[i][1] + a[i][1] * b[i][0];
    out[i][0] = re;
    out[i][1] = im;
  }
}

struct CplxBuf {
  std::size_t n = 0;
  fftw_complex* p = nullptr;
  explicit CplxBuf(std::size_t n_) : n(n_) { p = fftw_alloc_complex(n); }
  ~CplxBuf() { fftw_free(p); }
  CplxBuf(const CplxBuf&) = delete;
  CplxBuf(CplxBuf&& o) noexcept : n(o.n), p(o.p) { o.p = nullptr; }
};

// Samples the gradient-kernel weight w(r) (gradient = w(r) * x) on the grid,
// truncated at the minimum image radius L, origin cell zero.
std::array<std::vector<double>, 3> sample_gradient_kernel(const Grid& g,
                                                          const RieszSpec& riesz,
                                                          const KernelTable* table) {
  const std::size_t nc = g.cells();
  std::array<std::vector<double>, 3> K{std::vector<double>(nc, 0.0),
                                       std::vector<double>(nc, 0.0),
                                       std::vector<double>(nc, 0.0)};
  const double s = riesz.s;
  const double L2 = g.L * g.L;
  parallel_for(static_cast<std::size_t>(g.m), [&](std::size_t iu) {
    const int i = static_cast<int>(iu);
    const double xi = g.min_image(i * g.h());
    for (int j = 0; j < g.m; ++j) {
      const double yj = g.min_image(j * g.h());
      for (int k = 0; k < g.m; ++k) {
        const double zk = g.min_image(k * g.h());
        const double r2 = xi * xi + yj * yj + zk * zk;
        if (r2 <= 0 || r2 > L2) continue;
        double w;
        if (table) {
          if (r2 >= table->newton_radius2())
            w = -s * std::pow(r2, -(s + 2) / 2);
          else
            w = table->near_field_w(r2);
        } else {
          w = -s * std::pow(r2, -(s + 2) / 2);
        }
        const std::size_t idx = g.index(i, j, k);
        K[0][idx] = w * xi;
        K[1][idx] = w * yj;
        K[2][idx] = w * zk;
      }
    }
  });
  return K;
}

// Second-order discrete Laplacian symbol sum_j (2 - 2 cos(2 pi k_j / m)) / h^2
// on the r2c layout; diffusion is integrated exactly in time against this
// symbol, keeping the spatial error of the full scheme O(h^2).
std::vector<double> laplacian_symbol(const Grid& g) {
  const int m = g.m, mh = m / 2 + 1;
  const double h2 = g.h() * g.h();
  std::vector<double> w(static_cast<std::size_t>(m) * m * mh);
  std::vector<double> one(m);
  for (int i = 0; i < m; ++i) one[i] = (2.0 - 2.0 * std::cos(2.0 * kPi * i / m)) / h2;
  std::size_t idx = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < mh; ++k) w[idx++] = one[i] + one[j] + one[k];
  return w;
}

// One conservative MUSCL (van Leer limiter) sweep along `axis` with frozen
// face-centered velocities derived from cell velocities u.
void muscl_sweep(const Grid& g, std::vector<double>& f, const std::vector<double>& u,
                 int axis, double dt) {
  const int m = g.m;
  const double h = g.h();
  const std::size_t stride = axis == 0 ? static_cast<std::size_t>(m) * m
                            : axis == 1 ? static_cast<std::size_t>(m)
                                        : 1;
  // Lines orthogonal to the axis: enumerate base offsets.
  const int na = m, nb = m;
  const std::size_t sa = axis == 0 ? static_cast<std::size_t>(m) : static_cast<std::size_t>(m) * m;
  const std::size_t sb = axis == 2 ? static_cast<std::size_t>(m) : 1;

  parallel_for(static_cast<std::size_t>(na), [&](std::size_t ia) {
    std::vector<double> fl(m), ul(m), slope(m), flux(m);
    for (int ib = 0; ib < nb; ++ib) {
      const std::size_t base = ia * sa + static_cast<std::size_t>(ib) * sb;
      for (int i = 0; i < m; ++i) {
        fl[i] = f[base + i * stride];
        ul[i] = u[base + i * stride];
      }
      for (int i = 0; i < m; ++i) {
        const double dl = fl[i] - fl[(i + m - 1) % m];
        const double dr = fl[(i + 1) % m] - fl[i];
        slope[i] = (dl * dr > 0) ? 2.0 * dl * dr / (dl + dr) : 0.0;
      }
      for (int i = 0; i < m; ++i) {  // flux[i] is the face between i and i+1
        const int ip = (i + 1) % m;
        const double uf = 0.5 * (ul[i] + ul[ip]);
        const double nu = uf * dt / h;
        if (uf >= 0)
          flux[i] = uf * (fl[i] + 0.5 * (1.0 - nu) * slope[i]);
        else
          flux[i] = uf * (fl[ip] - 0.5 * (1.0 + nu) * slope[ip]);
      }
      for (int i = 0; i < m; ++i) {
        const double din = flux[(i + m - 1) % m] - flux[i];
        f[base + i * stride] += dt / h * din;
      }
    }
  });
}

}  // namespace

std::array<std::vector<double>, 3> convolve_gradient(const Grid& grid,
                                                     const std::vector<double>& f,
                                                     const RieszSpec& riesz,
                                                     const KernelTable* table) {
  Fft3 fft(grid.m);
  const std::size_t nc = fft.ncplx();
  auto K = sample_gradient_kernel(grid, riesz, table);
  CplxBuf fhat(nc), khat(nc), prod(nc);
  fft.forward(f.data(), fhat.p);
  const double scale = std::pow(grid.h(), 3) / static_cast<double>(grid.cells());
  std::array<std::vector<double>, 3> out;
  for (int c = 0; c < 3; ++c) {
    fft.forward(K[c].data(), khat.p);
    multiply_into(khat.p, fhat.p, prod.p, nc);
    out[c].resize(grid.cells());
    fft.backward(prod.p, out[c].data(), scale);
  }
  return out;
}

std::vector<double> convolve_radial_scalar(const Grid& grid, const std::vector<double>& f,
                                           const std::function<double(double)>& kernel,
                                           double trunc_r) {
  const std::size_t nc = grid.cells();
  std::vector<double> K(nc, 0.0);
  const double R2 = trunc_r * trunc_r;
  for (int i = 0; i < grid.m; ++i) {
    const double xi = grid.min_image(i * grid.h());
    for (int j = 0; j < grid.m; ++j) {
      const double yj = grid.min_image(j * grid.h());
      for (int k = 0; k < grid.m; ++k) {
        const double zk = grid.min_image(k * grid.h());
        const double r2 = xi * xi + yj * yj + zk * zk;
        if (r2 > R2) continue;
        K[grid.index(i, j, k)] = kernel(std::sqrt(r2));
      }
    }
  }
  Fft3 fft(grid.m);
  CplxBuf fhat(fft.ncplx()), khat(fft.ncplx()), prod(fft.ncplx());
  fft.forward(f.data(), fhat.p);
  fft.forward(K.data(), khat.p);
  multiply_into(khat.p, fhat.p, prod.p, fft.ncplx());
  std::vector<double> out(nc);
  fft.backward(prod.p, out.data(), std::pow(grid.h(), 3) / static_cast<double>(nc));
  return out;
}

double lp_norm(const Grid& grid, const std::vector<double>& f, double p) {
  if (!(p >= 1)) throw UsageError("lp_norm: p must be >= 1");
  double acc = 0;
  for (double v : f) acc += std::pow(std::abs(v), p);
  return std::pow(acc * std::pow(grid.h(), 3), 1.0 / p);
}

double linf_norm(const std::vector<double>& f) {
  double m = 0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

std::vector<std::vector<double>> lp_norm_timeline(const PdeResult& res, double p) {
  std::vector<std::vector<double>> out;
  for (const auto& field : res.timeline) {
    std::vector<double> row;
    for (const auto& sp : field.species) row.push_back(lp_norm(field.grid, sp, p));
    out.push_back(std::move(row));
  }
  return out;
}

DensityField sample_initial_density(const Grid& grid,
                                    const std::vector<SpeciesConfig>& species) {
  DensityField field;
  field.grid = grid;
  field.t = 0;
  field.species.resize(species.size());
  for (std::size_t a = 0; a < species.size(); ++a) {
    auto& f = field.species[a];
    f.resize(grid.cells());
    const auto& init = species[a].init;
    parallel_for(static_cast<std::size_t>(grid.m), [&](std::size_t iu) {
      const int i = static_cast<int>(iu);
      for (int j = 0; j < grid.m; ++j)
        for (int k = 0; k < grid.m; ++k)
          f[grid.index(i, j, k)] =
              init.density(Vec3{grid.coord(i), grid.coord(j), grid.coord(k)});
    });
    const double mass = field.mass(static_cast<int>(a));
    if (!(mass > 0)) throw InvariantViolation("initial density has zero grid mass");
    for (double& v : f) v /= mass;
  }
  return field;
}

Vec3 GradientTimeline::drift(const Vec3& x, int alpha, double t,
                             const InteractionMatrix& a) const {
  if (frames.empty()) throw RuntimeFailure("empty gradient timeline");
  // Locate the bracketing frames (times are sorted, typically uniform).
  std::size_t hi = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  std::size_t i1 = std::min(hi, times.size() - 1);
  std::size_t i0 = i1 > 0 ? i1 - 1 : 0;
  double w = 0;
  if (i1 > i0 && times[i1] > times[i0])
    w = std::clamp((t - times[i0]) / (times[i1] - times[i0]), 0.0, 1.0);
  Vec3 u{};
  for (int beta = 0; beta < a.n; ++beta) {
    const double ab = a.at(alpha, beta);
    if (ab == 0) continue;
    for (int c = 0; c < 3; ++c) {
      const double g0 = interpolate_trilinear(grid, frames[i0].per_species[beta][c], x);
      const double g1 = interpolate_trilinear(grid, frames[i1].per_species[beta][c], x);
      const double gc = (1 - w) * g0 + w * g1;
      (c == 0 ? u.x : c == 1 ? u.y : u.z) -= ab * gc;
    }
  }
  return u;
}

PdeResult solve_pde(const PdeConfig& cfg, int gradient_frames) {
  cfg.validate();
  const Grid& g = cfg.grid;
  const int n = static_cast<int>(cfg.species.size());
  const std::size_t nc = g.cells();
  const double h = g.h();

  // Mollified kernel table when requested; raw Riesz gradient otherwise.
  KernelTable table;
  const KernelTable* table_ptr = nullptr;
  if (cfg.eps) {
    table = kernel_table_cached(cfg.riesz, MollifierSpec::from_eps(*cfg.eps, cfg.riesz.d),
                                1024, 8 * g.L);
    table_ptr = &table;
  }

  Fft3 fft(g.m);
  const std::size_t ncplx = fft.ncplx();
  auto K = sample_gradient_kernel(g, cfg.riesz, table_ptr);
  std::vector<CplxBuf> khat;
  khat.reserve(3);
  for (int c = 0; c < 3; ++c) {
    khat.emplace_back(ncplx);
    fft.forward(K[c].data(), khat[c].p);
  }
  for (auto& kc : K) kc.clear();
  const std::vector<double> omega = laplacian_symbol(g);

  DensityField field = sample_initial_density(g, cfg.species);
  field.validate();

  PdeResult res;
  std::vector<double> out_times = cfg.output_times();
  std::size_t next_out = 0;
  std::vector<double> grad_times;
  if (gradient_frames > 0) {
    res.gradients.grid = g;
    const int F = std::max(gradient_frames, 2);
    for (int i = 0; i < F; ++i) grad_times.push_back(cfg.T * i / (F - 1));
  }
  std::size_t next_grad = 0;

  std::vector<CplxBuf> fhat;
  for (int a = 0; a < n; ++a) fhat.emplace_back(ncplx);
  CplxBuf acc(ncplx), prod(ncplx);
  std::vector<std::array<std::vector<double>, 3>> u(n);
  for (auto& ua : u)
    for (auto& c : ua) c.resize(nc);

  const double conv_scale = std::pow(h, 3) / static_cast<double>(nc);
  const long nsteps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  double t = 0;

  auto record_outputs = [&]() {
    while (next_out < out_times.size() && t >= out_times[next_out] - 1e-9 * cfg.T) {
      DensityField snap = field;
      snap.t = out_times[next_out];
      res.timeline.push_back(std::move(snap));
      ++next_out;
    }
  };
  auto record_gradients = [&](bool have_u) {
    while (next_grad < grad_times.size() && t >= grad_times[next_grad] - 1e-9 * cfg.T) {
      GradientFields gf;
      gf.t = grad_times[next_grad];
      gf.per_species.resize(n);
      for (int b = 0; b < n; ++b) {
        if (!have_u) fft.forward(field.species[b].data(), fhat[b].p);
        for (int c = 0; c < 3; ++c) {
          multiply_into(khat[c].p, fhat[b].p, prod.p, ncplx);
          gf.per_species[b][c].resize(nc);
          fft.backward(prod.p, gf.per_species[b][c].data(), conv_scale);
        }
      }
      res.gradients.times.push_back(gf.t);
      res.gradients.frames.push_back(std::move(gf));
      ++next_grad;
    }
  };

  record_outputs();
  if (gradient_frames > 0) {
    for (int b = 0; b < n; ++b) fft.forward(field.species[b].data(), fhat[b].p);
    record_gradients(true);
  }

  for (long step = 0; step < nsteps; ++step) {
    const double dt = std::min(cfg.dt, cfg.T - t);

    // Interaction velocities u_alpha = -sum_beta a(alpha,beta) grad V * f_beta.
    for (int b = 0; b < n; ++b) fft.forward(field.species[b].data(), fhat[b].p);
    record_gradients(true);
    for (int a = 0; a < n; ++a) {
      for (int c = 0; c < 3; ++c) {
        std::fill(&acc.p[0][0], &acc.p[0][0] + 2 * ncplx, 0.0);
        for (int b = 0; b < n; ++b) {
          const double ab = cfg.a.at(a, b);
          if (ab == 0) continue;
          multiply_into(khat[c].p, fhat[b].p, prod.p, ncplx);
          for (std::size_t i = 0; i < ncplx; ++i) {
            acc.p[i][0] -= ab * prod.p[i][0];
            acc.p[i][1] -= ab * prod.p[i][1];
          }
        }
        fft.backward(acc.p, u[a][c].data(), conv_scale);
      }
    }

    for (int a = 0; a < n; ++a) {
      // CFL substepping for the advection part (velocity frozen over dt).
      double vmax = 0;
      for (int c = 0; c < 3; ++c) vmax = std::max(vmax, linf_norm(u[a][c]));
      int nsub = std::max(1, static_cast<int>(std::ceil(vmax * dt / (0.45 * h))));
      if (nsub > 64)
        throw RuntimeFailure("advection CFL requires > 64 substeps; reduce dt");
      res.max_substeps = std::max(res.max_substeps, nsub);
      const double dts = dt / nsub;
      for (int sub = 0; sub < nsub; ++sub)
        for (int axis = 0; axis < 3; ++axis)
          muscl_sweep(g, field.species[a], u[a][axis], axis, dts);

      // Diffusion, exact in time against the discrete Laplacian symbol.
      fft.forward(field.species[a].data(), acc.p);
      const double sig = cfg.species[a].sigma;
      for (std::size_t i = 0; i < ncplx; ++i) {
        const double damp = std::exp(-sig * omega[i] * dt);
        acc.p[i][0] *= damp;
        acc.p[i][1] *= damp;
      }
      fft.backward(acc.p, field.species[a].data(), 1.0 / static_cast<double>(nc));

      const double clipped = field.clip_and_renormalize(a);
      res.max_clip_fraction = std::max(res.max_clip_fraction, clipped);
      if (clipped > 1e-6)
        throw RuntimeFailure("negative-mass clip exceeded 1e-6 in one step");
      if (std::abs(field.mass(a) - 1.0) > 1e-10)
        throw InvariantViolation("PDE mass conservation violated beyond 1e-10");
    }

    t += dt;
    field.t = t;
    record_outputs();
  }
  // Flush any trailing outputs (guards against dt rounding at t = T).
  t = cfg.T;
  record_outputs();
  if (gradient_frames > 0) {
    for (int b = 0; b < n; ++b) fft.forward(field.species[b].data(), fhat[b].p);
    record_gradients(true);
  }
  return res;
}

SmallnessReport check_smallness(const PdeConfig& cfg, double p) {
  const int d = cfg.riesz.d;
  const double s = cfg.riesz.s;
  if (p == 0) p = d + 1;
  if (!(p > 1)) throw UsageError("check_smallness: p must exceed 1");
  SmallnessReport rep;
  rep.p = p;

  // Sharp diagonal HLS constant (Lieb) for the kernel exponent lam = s + 1
  // (the gradient kernel |x|^{-(s+1)}):
  //   C(d, lam) = pi^{lam/2} Gamma((d-lam)/2) / Gamma(d - lam/2)
  //               * (Gamma(d/2)/Gamma(d))^{-1 + lam/d}.
  const double lam = s + 1;
  rep.c_hls = std::pow(kPi, lam / 2) * std::tgamma((d - lam) / 2) /
              std::tgamma(d - lam / 2) *
              std::pow(std::tgamma(d / 2.0) / std::tgamma(d), -1.0 + lam / d);
  // Sharp Sobolev/GNS constant (Talenti): ||u||_{2d/(d-2)} <= C ||grad u||_2,
  //   C = 1/sqrt(pi d (d-2)) * (Gamma(d)/Gamma(d/2))^{1/d}.
  rep.c_gns = 1.0 / std::sqrt(kPi * d * (d - 2)) *
              std::pow(std::tgamma(d) / std::tgamma(d / 2.0), 1.0 / d);

  const double expo = 2 * s * p / (d * (p - 1));
  const int n = static_cast<int>(cfg.species.size());
  rep.satisfied = true;
  for (int a = 0; a < n; ++a) {
    double lhs = 0;
    for (int b = 0; b < n; ++b)
      lhs += std::abs(cfg.a.at(a, b)) * std::pow(cfg.species[b].init.lp_norm(p, d), expo);
    const double rowsum = cfg.a.row_abs_sum(a);
    const double sig = cfg.species[a].sigma;
    const double rhs = rowsum > 0 ? 4 * sig * sig /
                                        (p * p * rep.c_hls * rep.c_hls * rep.c_gns *
                                         rep.c_gns * rowsum)
                                  : std::numeric_limits<double>::infinity();
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    if (!(lhs <= rhs)) rep.satisfied = false;
  }
  return rep;
}

}  // namespace msad
