#include "msad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace msad {

std::size_t Histogram::size() const {
  std::size_t n = 1;
  for (int b : bins) n *= static_cast<std::size_t>(b);
  return n;
}

double Histogram::bin_volume() const {
  double v = 1;
  for (int d = 0; d < dims(); ++d) v *= (hi[d] - lo[d]) / bins[d];
  return v;
}

int Histogram::locate(int dim, double v) const {
  const double w = (hi[dim] - lo[dim]) / bins[dim];
  int i = static_cast<int>(std::floor((v - lo[dim]) / w));
  return std::clamp(i, 0, bins[dim] - 1);
}

void Histogram::add_sample(const std::vector<double>& point, double weight) {
  std::size_t idx = 0;
  for (int d = 0; d < dims(); ++d) idx = idx * bins[d] + locate(d, point[d]);
  mass[idx] += weight;
  ++samples;
}

void Histogram::normalize() {
  const double tot = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(tot > 0)) throw InvariantViolation("histogram has zero total mass");
  for (double& m : mass) m /= tot;
}

void Histogram::validate() const {
  if (bins.empty() || lo.size() != bins.size() || hi.size() != bins.size())
    throw InvariantViolation("histogram shape mismatch");
  if (mass.size() != size()) throw InvariantViolation("histogram mass size mismatch");
  double tot = 0;
  for (double m : mass) {
    if (m < 0) throw InvariantViolation("histogram mass must be nonnegative");
    tot += m;
  }
  if (std::abs(tot - 1.0) > 1e-12)
    throw InvariantViolation("histogram masses must sum to 1 within 1e-12");
}

Histogram Histogram::regular(int dims, int bins_per_dim, double lo_, double hi_) {
  Histogram h;
  h.bins.assign(dims, bins_per_dim);
  h.lo.assign(dims, lo_);
  h.hi.assign(dims, hi_);
  h.mass.assign(h.size(), 0.0);
  return h;
}

int rate_bins(std::uint64_t samples, int d) {
  return 2 * std::max(1, static_cast<int>(std::lround(
                             std::pow(static_cast<double>(samples), 1.0 / (d + 2)))));
}

namespace {

void require_same_shape(const Histogram& p, const Histogram& q) {
  if (p.bins != q.bins || p.lo != q.lo || p.hi != q.hi)
    throw UsageError("histograms must share the same binning");
}

}  // namespace

RelEntropyResult relative_entropy(const Histogram& p, const Histogram& q) {
  require_same_shape(p, q);
  RelEntropyResult res;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    const double pi = p.mass[i], qi = q.mass[i];
    if (pi <= 0) continue;  // 0 log 0 = 0
    if (qi <= 0) {
      res.finite = false;
      res.offending_bins.push_back(i);
      continue;
    }
    res.value += pi * std::log(pi / qi);
  }
  if (!res.finite) res.value = std::numeric_limits<double>::infinity();
  return res;
}

double relative_entropy_smoothed(const Histogram& p, const Histogram& q) {
  require_same_shape(p, q);
  Histogram qf = q;
  for (double& m : qf.mass) m = std::max(m, 1e-12);
  qf.normalize();
  return relative_entropy(p, qf).value;
}

DistanceReport ckp_check(const Histogram& p, const Histogram& q) {
  require_same_shape(p, q);
  DistanceReport rep;
  const RelEntropyResult h = relative_entropy(p, q);
  rep.rel_entropy = h.value;
  if (h.finite && h.value < -1e-12)
    throw InvariantViolation("relative entropy below -1e-12 (Gibbs violated)");
  const double vol = p.bin_volume();
  double l22 = 0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    const double d = p.mass[i] - q.mass[i];
    rep.l1 += std::abs(d);
    l22 += d * d / vol;
  }
  rep.l2 = std::sqrt(l22);
  rep.ckp_margin = h.finite ? std::sqrt(2.0 * std::max(h.value, 0.0)) - rep.l1
                            : std::numeric_limits<double>::infinity();
  if (rep.ckp_margin < -1e-9)
    throw InvariantViolation("CKP inequality violated beyond 1e-9");
  return rep;
}

DensityField empirical_density(const ParticleState& st, int alpha, double bandwidth,
                               const Grid& grid) {
  if (!(bandwidth >= 2 * grid.h()))
    throw UsageError("empirical_density: bandwidth must be >= 2h (under-resolved bump)");
  DensityField out;
  out.grid = grid;
  out.t = st.t;
  out.species.assign(1, std::vector<double>(grid.cells(), 0.0));
  auto& f = out.species[0];
  const MollifierSpec bw = MollifierSpec::from_eps(bandwidth, 3);
  const double h = grid.h();
  const int reach = static_cast<int>(std::ceil(bandwidth / h)) + 1;
  const double wgt_cell = std::pow(h, 3);

  std::vector<double> bump(grid.cells());  // scratch per particle: sparse touch
  for (std::uint64_t pi = 0; pi < st.N; ++pi) {
    const Vec3 xp = st.get(alpha, pi);
    const int ci = grid.wrap(static_cast<int>(std::floor((xp.x + grid.L) / h)));
    const int cj = grid.wrap(static_cast<int>(std::floor((xp.y + grid.L) / h)));
    const int ck = grid.wrap(static_cast<int>(std::floor((xp.z + grid.L) / h)));
    double sum = 0;
    std::vector<std::pair<std::size_t, double>> touched;
    for (int di = -reach; di <= reach; ++di)
      for (int dj = -reach; dj <= reach; ++dj)
        for (int dk = -reach; dk <= reach; ++dk) {
          const int i = grid.wrap(ci + di), j = grid.wrap(cj + dj), k = grid.wrap(ck + dk);
          const double dx = grid.min_image(grid.coord(i) - xp.x);
          const double dy = grid.min_image(grid.coord(j) - xp.y);
          const double dz = grid.min_image(grid.coord(k) - xp.z);
          const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
          if (r >= bandwidth) continue;
          const double v = mollifier_value(r, bw);
          if (v > 0) {
            touched.emplace_back(grid.index(i, j, k), v);
            sum += v;
          }
        }
    if (!(sum > 0)) throw RuntimeFailure("empirical_density: empty bump footprint");
    // Per-particle normalization: each bump carries exactly mass 1/N.
    const double scale = 1.0 / (sum * wgt_cell * static_cast<double>(st.N));
    for (auto& [idx, v] : touched) f[idx] += v * scale;
  }
  (void)bump;
  if (std::abs(out.mass(0) - 1.0) > 1e-10)
    throw InvariantViolation("empirical density mass drift beyond 1e-10");
  return out;
}

Histogram marginal_histogram(const std::vector<ParticleState>& reps,
                             const std::vector<int>& K, const Grid& box,
                             int bins_per_dim) {
  if (reps.size() < 30)
    throw UsageError("marginal_histogram: need >= 30 Monte Carlo replications");
  int ksum = 0;
  for (int k : K) ksum += k;
  const int dims = 3 * ksum;
  if (dims > 3)
    throw UsageError("marginal dimension d*|K| exceeds 3; reduce K");
  if (dims <= 0) throw UsageError("marginal_histogram: K must select a particle");
  Histogram h = Histogram::regular(dims, bins_per_dim, -box.L, box.L);
  std::vector<double> pt(dims);
  for (const auto& st : reps) {
    if (static_cast<std::size_t>(st.n) != K.size())
      throw UsageError("K length must match species count");
    int c = 0;
    for (int a = 0; a < st.n; ++a)
      for (int i = 0; i < K[a]; ++i) {
        const Vec3 x = st.get(a, static_cast<std::uint64_t>(i));
        pt[c++] = box.min_image(x.x);
        pt[c++] = box.min_image(x.y);
        pt[c++] = box.min_image(x.z);
      }
    h.add_sample(pt);
  }
  h.normalize();
  return h;
}

Histogram histogram_from_density(const Grid& grid, const std::vector<double>& f,
                                 const Grid& box, int bins_per_dim) {
  Histogram h = Histogram::regular(3, bins_per_dim, -box.L, box.L);
  const double cellmass = std::pow(grid.h(), 3);
  for (int i = 0; i < grid.m; ++i)
    for (int j = 0; j < grid.m; ++j)
      for (int k = 0; k < grid.m; ++k) {
        const std::size_t idx =
            (static_cast<std::size_t>(h.locate(0, box.min_image(grid.coord(i)))) *
                 bins_per_dim +
             h.locate(1, box.min_image(grid.coord(j)))) *
                bins_per_dim +
            h.locate(2, box.min_image(grid.coord(k)));
        h.mass[idx] += f[grid.index(i, j, k)] * cellmass;
      }
  h.normalize();
  return h;
}

LlnResult lln_statistic_grad(const ParticleState& st, const KernelTable& table,
                             const GradientFields& conv, const Grid& grid, double theta) {
  if (!(theta >= 0 && theta < 0.5)) throw UsageError("LLN: theta must lie in [0, 1/2)");
  LlnResult res;
  res.threshold = std::pow(static_cast<double>(st.N), -theta);
  const double s = table.s();
  const double nr2 = table.newton_radius2();
  std::vector<double> devs(st.n * st.N, 0.0);
  for (int alpha = 0; alpha < st.n; ++alpha) {
    parallel_for(st.N, [&](std::size_t i) {
      const Vec3 xi = st.get(alpha, i);
      double worst = 0;
      for (int beta = 0; beta < st.n; ++beta) {
        double gx = 0, gy = 0, gz = 0;
        const double* sx = st.x[beta].data();
        const double* sy = st.y[beta].data();
        const double* sz = st.z[beta].data();
        for (std::uint64_t j = 0; j < st.N; ++j) {
          const double dx = xi.x - sx[j], dy = xi.y - sy[j], dz = xi.z - sz[j];
          const double r2 = dx * dx + dy * dy + dz * dz;
          double w;
          if (r2 >= nr2)
            w = -s * std::pow(r2, -(s + 2) / 2);
          else
            w = table.near_field_w(r2);
          gx += w * dx;
          gy += w * dy;
          gz += w * dz;
        }
        const double invn = 1.0 / static_cast<double>(st.N);
        const Vec3 emp{gx * invn, gy * invn, gz * invn};
        const Vec3 fld{interpolate_trilinear(grid, conv.per_species[beta][0], xi),
                       interpolate_trilinear(grid, conv.per_species[beta][1], xi),
                       interpolate_trilinear(grid, conv.per_species[beta][2], xi)};
        worst = std::max(worst, (emp - fld).norm());
      }
      devs[alpha * st.N + i] = worst;
    });
  }
  for (double d : devs) res.max_deviation = std::max(res.max_deviation, d);
  res.exceeded = res.max_deviation > res.threshold;
  return res;
}

LlnResult lln_statistic_aux(const ParticleState& st, double eps, double s,
                            const std::vector<std::vector<double>>& conv,
                            const Grid& grid, double theta) {
  if (!(theta >= 0 && theta < 0.5)) throw UsageError("LLN: theta must lie in [0, 1/2)");
  LlnResult res;
  res.threshold = std::pow(static_cast<double>(st.N), -theta);
  std::vector<double> devs(st.n * st.N, 0.0);
  for (int alpha = 0; alpha < st.n; ++alpha) {
    parallel_for(st.N, [&](std::size_t i) {
      const Vec3 xi = st.get(alpha, i);
      double worst = 0;
      for (int beta = 0; beta < st.n; ++beta) {
        double acc = 0;
        for (std::uint64_t j = 0; j < st.N; ++j)
          acc += auxiliary_K(xi - st.get(beta, j), eps, s);
        const double emp = acc / static_cast<double>(st.N);
        const double fld = interpolate_trilinear(grid, conv[beta], xi);
        worst = std::max(worst, std::abs(emp - fld));
      }
      devs[alpha * st.N + i] = worst;
    });
  }
  for (double d : devs) res.max_deviation = std::max(res.max_deviation, d);
  res.exceeded = res.max_deviation > res.threshold;
  return res;
}

void wilson_interval(std::uint64_t k, std::uint64_t m, double& lo, double& mid,
                     double& hi) {
  if (m == 0) throw UsageError("wilson_interval: zero trials");
  const double z = 1.959963984540054;  // 95%
  const double n = static_cast<double>(m), x = static_cast<double>(k);
  const double ph = x / n, z2 = z * z;
  mid = (x + z2 / 2) / (n + z2);
  const double half = z * std::sqrt(ph * (1 - ph) * n + z2 / 4) / (n + z2);
  lo = std::max(0.0, mid - half);
  hi = std::min(1.0, mid + half);
}

CouplingStats coupling_event(const std::vector<CoupledResult>& runs, double lambda,
                             const SimConfig& cfg) {
  const double ell = cfg.moll.ell, s = cfg.riesz.s;
  const double lam_hi = 0.5 - ell * (s + 1);
  if (!(lambda > ell && lambda < lam_hi)) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "lambda=%.4g outside (%.4g, %.4g) required by Eq. (range lambda)",
                  lambda, ell, lam_hi);
    throw UsageError(buf);
  }
  if (runs.empty()) throw UsageError("coupling_event: no replications");
  CouplingStats cs;
  cs.lambda = lambda;
  cs.reps = runs.size();
  const double thr = std::pow(static_cast<double>(cfg.N), -lambda);
  const std::size_t nt = runs[0].interacting.size();
  for (std::size_t ti = 0; ti < nt; ++ti) {
    std::uint64_t count = 0;
    for (const auto& run : runs) {
      if (run.interacting.size() != nt || run.intermediate.size() != nt)
        throw RuntimeFailure("coupled runs disagree on snapshot count");
      const ParticleState& xs = run.interacting[ti];
      const ParticleState& xt = run.intermediate[ti];
      double worst = 0;
      for (int a = 0; a < xs.n; ++a)
        for (std::uint64_t i = 0; i < xs.N; ++i)
          worst = std::max(worst, (xs.get(a, i) - xt.get(a, i)).norm());
      if (worst >= thr) ++count;
    }
    double lo, mid, hi;
    wilson_interval(count, cs.reps, lo, mid, hi);
    cs.times.push_back(runs[0].interacting[ti].t);
    cs.prob.push_back(static_cast<double>(count) / static_cast<double>(cs.reps));
    cs.wilson_lo.push_back(lo);
    cs.wilson_mid.push_back(mid);
    cs.wilson_hi.push_back(hi);
  }
  return cs;
}

std::size_t DiscreteJoint::size() const {
  std::size_t sz = 1;
  for (int i = 0; i < n * N; ++i) sz *= static_cast<std::size_t>(states);
  return sz;
}

void DiscreteJoint::validate() const {
  if (n < 1 || n > 2 || N < 1 || N > 4 || states < 2 || states > 8)
    throw UsageError("subadditivity check restricted to n<=2, N<=4, states<=8");
  if (p.size() != size()) throw InvariantViolation("joint law size mismatch");
  double tot = 0;
  for (double v : p) {
    if (v < 0) throw InvariantViolation("joint law must be nonnegative");
    tot += v;
  }
  if (std::abs(tot - 1.0) > 1e-12)
    throw InvariantViolation("joint law must sum to 1 within 1e-12");
}

namespace {

// Digits of a flat joint index: particle (alpha, i) occupies position
// alpha*N + i, most significant first.
void unpack(std::size_t idx, int np, int states, std::vector<int>& dig) {
  for (int pos = np - 1; pos >= 0; --pos) {
    dig[pos] = static_cast<int>(idx % states);
    idx /= states;
  }
}

std::size_t pack(const std::vector<int>& dig, int states) {
  std::size_t idx = 0;
  for (int d : dig) idx = idx * states + d;
  return idx;
}

double entropy_sum(const std::vector<double>& p, const std::vector<double>& q) {
  double h = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) return std::numeric_limits<double>::infinity();
    h += p[i] * std::log(p[i] / q[i]);
  }
  return h;
}

}  // namespace

bool DiscreteJoint::exchangeable(double tol) const {
  const int np = n * N;
  std::vector<int> dig(np);
  // Adjacent within-species transpositions generate the symmetric group.
  for (int a = 0; a < n; ++a)
    for (int i = 0; i + 1 < N; ++i) {
      const int p0 = a * N + i, p1 = a * N + i + 1;
      for (std::size_t idx = 0; idx < p.size(); ++idx) {
        unpack(idx, np, states, dig);
        std::swap(dig[p0], dig[p1]);
        if (std::abs(p[idx] - p[pack(dig, states)]) > tol) return false;
      }
    }
  return true;
}

SubaddResult subadditivity_check(const DiscreteJoint& joint,
                                 const std::vector<std::vector<double>>& tilde,
                                 const std::vector<int>& K) {
  joint.validate();
  if (static_cast<int>(tilde.size()) != joint.n || static_cast<int>(K.size()) != joint.n)
    throw UsageError("tilde and K must have one entry per species");
  for (const auto& tl : tilde)
    if (static_cast<int>(tl.size()) != joint.states)
      throw UsageError("tilde laws must live on the particle state space");
  int maxk = 0;
  for (int a = 0; a < joint.n; ++a) {
    if (K[a] < 0 || K[a] > joint.N) throw UsageError("K out of range");
    maxk = std::max(maxk, K[a]);
  }
  if (!joint.exchangeable())
    throw InvariantViolation(
        "joint law is not within-species exchangeable (Lemma 2.2 hypothesis)");

  const int np = joint.n * joint.N;
  // f^{(K)}: marginal over the first K_alpha particles of each species.
  std::vector<int> sel;
  for (int a = 0; a < joint.n; ++a)
    for (int i = 0; i < K[a]; ++i) sel.push_back(a * joint.N + i);
  std::size_t msz = 1;
  for (std::size_t i = 0; i < sel.size(); ++i) msz *= joint.states;
  std::vector<double> marg(std::max<std::size_t>(msz, 1), 0.0);
  std::vector<double> ref(marg.size(), 0.0);
  std::vector<int> dig(np), sub(sel.size());
  for (std::size_t idx = 0; idx < joint.p.size(); ++idx) {
    unpack(idx, np, joint.states, dig);
    for (std::size_t c = 0; c < sel.size(); ++c) sub[c] = dig[sel[c]];
    marg[sel.empty() ? 0 : pack(sub, joint.states)] += joint.p[idx];
  }
  // Product reference on the marginal space and on the full space.
  for (std::size_t midx = 0; midx < ref.size(); ++midx) {
    std::size_t r = midx;
    double q = 1;
    for (int c = static_cast<int>(sel.size()) - 1; c >= 0; --c) {
      const int st = static_cast<int>(r % joint.states);
      r /= joint.states;
      q *= tilde[sel[c] / joint.N][st];
    }
    ref[midx] = q;
  }
  std::vector<double> full_ref(joint.p.size());
  for (std::size_t idx = 0; idx < joint.p.size(); ++idx) {
    unpack(idx, np, joint.states, dig);
    double q = 1;
    for (int pos = 0; pos < np; ++pos) q *= tilde[pos / joint.N][dig[pos]];
    full_ref[idx] = q;
  }

  SubaddResult res;
  res.lhs = entropy_sum(marg, ref);
  res.rhs = static_cast<double>(maxk) / joint.N * entropy_sum(joint.p, full_ref);
  res.holds = res.lhs <= res.rhs + 1e-12;
  return res;
}

}  // namespace msad
