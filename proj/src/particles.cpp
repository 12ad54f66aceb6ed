#include "msad/particles.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "msad/rng.hpp"

namespace msad {

void ParticleState::resize(int n_, std::uint64_t N_) {
  n = n_;
  N = N_;
  x.assign(n, std::vector<double>(N));
  y.assign(n, std::vector<double>(N));
  z.assign(n, std::vector<double>(N));
}

double ParticleState::max_abs_coord() const {
  double m = 0;
  for (const auto* arr : {&x, &y, &z})
    for (const auto& sp : *arr)
      for (double v : sp) m = std::max(m, std::abs(v));
  return m;
}

void DriftField::resize(int n, std::uint64_t N) {
  x.assign(n, std::vector<double>(N));
  y.assign(n, std::vector<double>(N));
  z.assign(n, std::vector<double>(N));
}

namespace {

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double read_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw RuntimeFailure("snapshot file truncated");
  return v;
}

}  // namespace

void ParticleState::save(const std::string& path, std::uint64_t seed) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open snapshot file for writing: " + path);
  os.write("MSADP1", 6);
  write_f64(os, n);
  write_f64(os, static_cast<double>(N));
  write_f64(os, 3);
  write_f64(os, t);
  write_f64(os, static_cast<double>(step_index));
  write_f64(os, static_cast<double>(seed));
  for (int a = 0; a < n; ++a)
    for (std::uint64_t i = 0; i < N; ++i) {
      write_f64(os, x[a][i]);
      write_f64(os, y[a][i]);
      write_f64(os, z[a][i]);
    }
  if (!os) throw RuntimeFailure("snapshot write failed: " + path);
}

ParticleState ParticleState::load(const std::string& path, std::uint64_t* seed_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open snapshot file: " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, "MSADP1", 6) != 0)
    throw RuntimeFailure("bad snapshot magic: " + path);
  ParticleState st;
  const int n = static_cast<int>(read_f64(is));
  const auto N = static_cast<std::uint64_t>(read_f64(is));
  const int d = static_cast<int>(read_f64(is));
  if (d != 3) throw RuntimeFailure("snapshot dimension must be 3");
  st.resize(n, N);
  st.t = read_f64(is);
  st.step_index = static_cast<std::uint64_t>(read_f64(is));
  const auto seed = static_cast<std::uint64_t>(read_f64(is));
  if (seed_out) *seed_out = seed;
  for (int a = 0; a < n; ++a)
    for (std::uint64_t i = 0; i < N; ++i) {
      st.x[a][i] = read_f64(is);
      st.y[a][i] = read_f64(is);
      st.z[a][i] = read_f64(is);
    }
  return st;
}

ParticleState sample_initial(const SimConfig& cfg) {
  ParticleState st;
  st.resize(cfg.n, cfg.N);
  for (int a = 0; a < cfg.n; ++a) {
    const auto& init = cfg.species[a].init;
    const double R = init.effective_trunc();
    parallel_for(cfg.N, [&](std::size_t i) {
      NormalStream rng(cfg.seed, RngPurpose::kInitial, static_cast<std::uint32_t>(a),
                       static_cast<std::uint32_t>(i));
      // Rejection on the truncation ball; slot pairs (2k, 2k+1) per attempt.
      for (std::uint32_t attempt = 0;; ++attempt) {
        if (attempt > 10000)
          throw RuntimeFailure("initial sampling: rejection failed to converge");
        double g0, g1, g2, g3;
        rng.normal_pair(0, 2 * attempt, g0, g1);
        rng.normal_pair(0, 2 * attempt + 1, g2, g3);
        const Vec3 v{g0 * init.width, g1 * init.width, g2 * init.width};
        if (v.norm2() <= R * R) {
          st.x[a][i] = init.center.x + v.x;
          st.y[a][i] = init.center.y + v.y;
          st.z[a][i] = init.center.z + v.z;
          break;
        }
      }
    });
  }
  return st;
}

void compute_drift(const ParticleState& st, const KernelTable& table,
                   const InteractionMatrix& a, DriftField& out) {
  const int n = st.n;
  const std::uint64_t N = st.N;
  out.resize(n, N);
  const double s = table.s();
  const double nr2 = table.newton_radius2();
  const bool coulomb = std::abs(s - 1.0) < 1e-12;
  const double inv_n = -1.0 / static_cast<double>(N);

  for (int alpha = 0; alpha < n; ++alpha) {
    double* ox = out.x[alpha].data();
    double* oy = out.y[alpha].data();
    double* oz = out.z[alpha].data();
    const double* txp = st.x[alpha].data();
    const double* typ = st.y[alpha].data();
    const double* tzp = st.z[alpha].data();
    parallel_for(N, [&](std::size_t i) {
      const double xi = txp[i], yi = typ[i], zi = tzp[i];
      double fx = 0, fy = 0, fz = 0;
      for (int beta = 0; beta < n; ++beta) {
        const double ab = a.at(alpha, beta);
        if (ab == 0) continue;
        const double* sx = st.x[beta].data();
        const double* sy = st.y[beta].data();
        const double* sz = st.z[beta].data();
        double gx = 0, gy = 0, gz = 0;
        if (coulomb) {
          // Blocked, branch-free far-field pass (vectorizable), with the
          // rare near-field pairs patched from the table afterwards. Within
          // each block near pairs see r2 -> 1e300, whose weight underflows
          // to exactly zero.
          constexpr std::uint64_t B = 512;
          alignas(64) double r2b[B];
          for (std::uint64_t j0 = 0; j0 < N; j0 += B) {
            const std::uint64_t jb = std::min(B, N - j0);
            double rmin = 1e300;
            std::uint64_t j = 0;
#if defined(__AVX512F__)
            {
              const __m512d vxi = _mm512_set1_pd(xi);
              const __m512d vyi = _mm512_set1_pd(yi);
              const __m512d vzi = _mm512_set1_pd(zi);
              const __m512d vnr2 = _mm512_set1_pd(nr2);
              const __m512d vhuge = _mm512_set1_pd(1e300);
              const __m512d vhalf = _mm512_set1_pd(0.5);
              const __m512d v3half = _mm512_set1_pd(1.5);
              __m512d vgx = _mm512_setzero_pd();
              __m512d vgy = _mm512_setzero_pd();
              __m512d vgz = _mm512_setzero_pd();
              __m512d vrmin = vhuge;
              for (; j + 8 <= jb; j += 8) {
                const __m512d dx = _mm512_sub_pd(vxi, _mm512_loadu_pd(sx + j0 + j));
                const __m512d dy = _mm512_sub_pd(vyi, _mm512_loadu_pd(sy + j0 + j));
                const __m512d dz = _mm512_sub_pd(vzi, _mm512_loadu_pd(sz + j0 + j));
                const __m512d r2 = _mm512_fmadd_pd(
                    dx, dx, _mm512_fmadd_pd(dy, dy, _mm512_mul_pd(dz, dz)));
                _mm512_store_pd(r2b + j, r2);
                vrmin = _mm512_min_pd(vrmin, r2);
                // Near pairs see r2 -> 1e300; their weight underflows to 0.
                const __mmask8 far = _mm512_cmp_pd_mask(r2, vnr2, _CMP_GE_OQ);
                const __m512d r2c = _mm512_mask_blend_pd(far, vhuge, r2);
                // w = -r2c^{-3/2} via rsqrt seed plus two Newton steps:
                // y <- y (1.5 - 0.5 r2c y^2), then w = -y^3.
                __m512d y = _mm512_rsqrt14_pd(r2c);
                const __m512d hr = _mm512_mul_pd(vhalf, r2c);
                y = _mm512_mul_pd(
                    y, _mm512_fnmadd_pd(_mm512_mul_pd(hr, y), y, v3half));
                y = _mm512_mul_pd(
                    y, _mm512_fnmadd_pd(_mm512_mul_pd(hr, y), y, v3half));
                const __m512d w =
                    _mm512_sub_pd(_mm512_setzero_pd(),
                                  _mm512_mul_pd(_mm512_mul_pd(y, y), y));
                vgx = _mm512_fmadd_pd(w, dx, vgx);
                vgy = _mm512_fmadd_pd(w, dy, vgy);
                vgz = _mm512_fmadd_pd(w, dz, vgz);
              }
              gx += _mm512_reduce_add_pd(vgx);
              gy += _mm512_reduce_add_pd(vgy);
              gz += _mm512_reduce_add_pd(vgz);
              rmin = std::min(rmin, _mm512_reduce_min_pd(vrmin));
            }
#endif
            for (; j < jb; ++j) {
              const double dx = xi - sx[j0 + j];
              const double dy = yi - sy[j0 + j];
              const double dz = zi - sz[j0 + j];
              const double r2 = dx * dx + dy * dy + dz * dz;
              r2b[j] = r2;
              rmin = std::min(rmin, r2);
              const double r2c = r2 >= nr2 ? r2 : 1e300;
              const double w = -1.0 / (r2c * std::sqrt(r2c));
              gx += w * dx;
              gy += w * dy;
              gz += w * dz;
            }
            if (rmin < nr2) {
              for (std::uint64_t j = 0; j < jb; ++j) {
                if (r2b[j] < nr2 && r2b[j] > 0) {
                  const double w = table.near_field_w(r2b[j]);
                  gx += w * (xi - sx[j0 + j]);
                  gy += w * (yi - sy[j0 + j]);
                  gz += w * (zi - sz[j0 + j]);
                }
              }
            }
          }
        } else {
          for (std::uint64_t j = 0; j < N; ++j) {
            const double dx = xi - sx[j];
            const double dy = yi - sy[j];
            const double dz = zi - sz[j];
            const double r2 = dx * dx + dy * dy + dz * dz;
            // Exact closed form beyond the Newton radius; table below.
            const double w = r2 >= nr2 ? -s * std::pow(r2, -(s + 2) / 2)
                             : r2 > 0  ? table.near_field_w(r2)
                                       : 0.0;
            gx += w * dx;
            gy += w * dy;
            gz += w * dz;
          }
        }
        fx += ab * gx;
        fy += ab * gy;
        fz += ab * gz;
      }
      if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(fz)) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "non-finite drift for species %d particle %llu", alpha,
                      static_cast<unsigned long long>(i));
        throw RuntimeFailure(buf);
      }
      ox[i] = inv_n * fx;
      oy[i] = inv_n * fy;
      oz[i] = inv_n * fz;
    });
  }
}

namespace {

// Adds drift*dt plus the Brownian increment for every particle.
void apply_increment(ParticleState& st, const SimConfig& cfg, const DriftField& drift,
                     double dt) {
  const auto step_idx = static_cast<std::uint32_t>(st.step_index);
  for (int a = 0; a < st.n; ++a) {
    const double noise = std::sqrt(2.0 * cfg.species[a].sigma * dt);
    double* px = st.x[a].data();
    double* py = st.y[a].data();
    double* pz = st.z[a].data();
    const double* dx = drift.x[a].data();
    const double* dy = drift.y[a].data();
    const double* dz = drift.z[a].data();
    parallel_for(st.N, [&](std::size_t i) {
      NormalStream rng(cfg.seed, RngPurpose::kBrownian, static_cast<std::uint32_t>(a),
                       static_cast<std::uint32_t>(i));
      double g0, g1, g2, g3;
      rng.normal_pair(step_idx, 0, g0, g1);
      rng.normal_pair(step_idx, 1, g2, g3);
      px[i] += dx[i] * dt + noise * g0;
      py[i] += dy[i] * dt + noise * g1;
      pz[i] += dz[i] * dt + noise * g2;
    });
  }
  st.step_index += 1;
  st.t += dt;
}

void check_stability(const ParticleState& st, const SimConfig& cfg) {
  const double bound = 1e3 * cfg.box.L;
  const double m = st.max_abs_coord();
  if (m > bound) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "particle blow-up at t=%.6g step=%llu: max|X|=%.3g exceeds "
                  "1e3 * box L = %.3g",
                  st.t, static_cast<unsigned long long>(st.step_index), m, bound);
    throw RuntimeFailure(buf);
  }
}

}  // namespace

void step(ParticleState& st, const SimConfig& cfg, const KernelTable& table,
          DriftField& scratch) {
  compute_drift(st, table, cfg.a, scratch);
  apply_increment(st, cfg, scratch, cfg.dt);
}

SimResult simulate(const SimConfig& cfg, const KernelTable& table) {
  cfg.validate();
  ParticleState st = sample_initial(cfg);
  SimResult res;
  const std::vector<double> outs = cfg.resolved_output_times();
  std::size_t next_out = 0;
  auto record = [&]() {
    while (next_out < outs.size() && st.t >= outs[next_out] - 1e-9 * cfg.T) {
      res.snapshots.push_back(st);
      ++next_out;
    }
  };
  record();
  DriftField scratch;
  const long nsteps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  for (long k = 0; k < nsteps; ++k) {
    const double dt = std::min(cfg.dt, cfg.T - st.t);
    compute_drift(st, table, cfg.a, scratch);
    apply_increment(st, cfg, scratch, dt);
    check_stability(st, cfg);
    res.max_abs_coord = std::max(res.max_abs_coord, st.max_abs_coord());
    record();
  }
  st.t = cfg.T;  // guard dt rounding
  record();
  return res;
}

Vec3 drift_from_field(const Vec3& x, const GradientFields& frame, const Grid& grid,
                      const InteractionMatrix& a, int alpha,
                      std::uint64_t* wrap_counter) {
  if (wrap_counter &&
      (std::abs(x.x) >= grid.L || std::abs(x.y) >= grid.L || std::abs(x.z) >= grid.L))
    ++*wrap_counter;
  Vec3 u{};
  for (int beta = 0; beta < a.n; ++beta) {
    const double ab = a.at(alpha, beta);
    if (ab == 0) continue;
    u.x -= ab * interpolate_trilinear(grid, frame.per_species[beta][0], x);
    u.y -= ab * interpolate_trilinear(grid, frame.per_species[beta][1], x);
    u.z -= ab * interpolate_trilinear(grid, frame.per_species[beta][2], x);
  }
  return u;
}

SimResult simulate_intermediate(const SimConfig& cfg, const GradientTimeline& fields) {
  cfg.validate();
  if (fields.frames.empty() || fields.times.front() > 1e-12 ||
      fields.times.back() < cfg.T * (1 - 1e-9))
    throw RuntimeFailure("gradient field timeline does not cover [0, T]");
  ParticleState xt = sample_initial(cfg);
  SimResult res;
  const std::vector<double> outs = cfg.resolved_output_times();
  std::size_t next_out = 0;
  auto record = [&]() {
    while (next_out < outs.size() && xt.t >= outs[next_out] - 1e-9 * cfg.T) {
      res.snapshots.push_back(xt);
      ++next_out;
    }
  };
  record();
  DriftField scratch;
  scratch.resize(cfg.n, cfg.N);
  const long nsteps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  for (long k = 0; k < nsteps; ++k) {
    const double dt = std::min(cfg.dt, cfg.T - xt.t);
    const double t0 = xt.t;
    for (int a = 0; a < cfg.n; ++a) {
      double* dx = scratch.x[a].data();
      double* dy = scratch.y[a].data();
      double* dz = scratch.z[a].data();
      parallel_for(cfg.N, [&](std::size_t i) {
        const Vec3 u = fields.drift(xt.get(a, i), a, t0, cfg.a);
        dx[i] = u.x;
        dy[i] = u.y;
        dz[i] = u.z;
      });
    }
    apply_increment(xt, cfg, scratch, dt);
    check_stability(xt, cfg);
    res.max_abs_coord = std::max(res.max_abs_coord, xt.max_abs_coord());
    record();
  }
  xt.t = cfg.T;
  record();
  return res;
}

CoupledResult simulate_coupled(const SimConfig& cfg, const KernelTable& table,
                               const GradientTimeline& fields) {
  cfg.validate();
  if (fields.frames.empty() || fields.times.front() > 1e-12 ||
      fields.times.back() < cfg.T * (1 - 1e-9))
    throw RuntimeFailure("gradient field timeline does not cover [0, T]");

  ParticleState xs = sample_initial(cfg);
  ParticleState xt = xs;  // shared initial data: max|X - Xt| = 0 at t = 0
  CoupledResult res;
  const std::vector<double> outs = cfg.resolved_output_times();
  std::size_t next_out = 0;
  auto record = [&]() {
    while (next_out < outs.size() && xs.t >= outs[next_out] - 1e-9 * cfg.T) {
      res.interacting.push_back(xs);
      res.intermediate.push_back(xt);
      ++next_out;
    }
  };
  record();

  DriftField scratch;
  std::vector<std::uint64_t> wraps(thread_count() > 0 ? thread_count() : 1, 0);
  const long nsteps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  for (long k = 0; k < nsteps; ++k) {
    const double dt = std::min(cfg.dt, cfg.T - xs.t);
    // Interacting system.
    compute_drift(xs, table, cfg.a, scratch);
    apply_increment(xs, cfg, scratch, dt);
    check_stability(xs, cfg);
    // Intermediate system: mean-field drift from the timeline at the step's
    // start time, same Brownian draws (same seed/purpose/step counters).
    const double t0 = xt.t;
    for (int a = 0; a < cfg.n; ++a) {
      double* dx = scratch.x[a].data();
      double* dy = scratch.y[a].data();
      double* dz = scratch.z[a].data();
      parallel_for(cfg.N, [&](std::size_t i) {
        const Vec3 u = fields.drift(xt.get(a, i), a, t0, cfg.a);
        dx[i] = u.x;
        dy[i] = u.y;
        dz[i] = u.z;
      });
    }
    apply_increment(xt, cfg, scratch, dt);
    check_stability(xt, cfg);
    for (int a = 0; a < cfg.n; ++a)
      for (std::uint64_t i = 0; i < cfg.N; ++i) {
        const Vec3 p = xt.get(a, i);
        if (std::abs(p.x) >= fields.grid.L || std::abs(p.y) >= fields.grid.L ||
            std::abs(p.z) >= fields.grid.L)
          ++res.wrap_count;
      }
    record();
  }
  xs.t = xt.t = cfg.T;
  record();
  return res;
}

}  // namespace msad
