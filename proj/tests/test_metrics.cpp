#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "msad/config.hpp"
#include "msad/kernels.hpp"
#include "msad/metrics.hpp"
#include "msad/particles.hpp"
#include "msad/pde.hpp"
#include "msad/rng.hpp"

using namespace msad;

namespace {

Histogram two_bin(double p0) {
  Histogram h = Histogram::regular(1, 2, 0.0, 1.0);
  h.mass = {p0, 1.0 - p0};
  h.samples = 1;
  return h;
}

// 1-d wrapped Gaussian used as a heat-flow oracle.
double wrapped_gaussian_1d(double x, double var, double L) {
  double s = 0;
  for (int k = -3; k <= 3; ++k) {
    const double u = x + 2 * L * k;
    s += std::exp(-u * u / (2 * var));
  }
  return s / std::sqrt(2 * kPi * var);
}

}  // namespace

TEST_CASE("relative_entropy: direct summation oracles") {
  // p = q -> 0.
  Histogram p = two_bin(0.5), q = two_bin(0.5);
  CHECK(relative_entropy(p, q).value == doctest::Approx(0.0).epsilon(1e-15));

  // p=(0.5,0.5), q=(0.25,0.75) -> 0.5 ln2 + 0.5 ln(2/3).
  q = two_bin(0.25);
  const double oracle = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  RelEntropyResult r = relative_entropy(p, q);
  CHECK(r.finite);
  CHECK(r.value == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.143841).epsilon(1e-5));

  // p=(1,0), q=(0.5,0.5) -> ln 2; the zero p-bin contributes 0 log 0 = 0.
  p = two_bin(1.0);
  q = two_bin(0.5);
  CHECK(relative_entropy(p, q).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("relative_entropy: vanishing reference flags +inf with bins") {
  Histogram p = two_bin(0.5), q = two_bin(1.0);
  RelEntropyResult r = relative_entropy(p, q);
  CHECK(!r.finite);
  CHECK(std::isinf(r.value));
  REQUIRE(r.offending_bins.size() == 1);
  CHECK(r.offending_bins[0] == 1);

  // The smoothed variant stays finite.
  const double s = relative_entropy_smoothed(p, q);
  CHECK(std::isfinite(s));
  CHECK(s > 0.0);
}

TEST_CASE("ckp_check: margin oracle and trivial case") {
  Histogram p = two_bin(0.5);
  DistanceReport same = ckp_check(p, p);
  CHECK(same.rel_entropy == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(same.l1 == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(same.ckp_margin == doctest::Approx(0.0).epsilon(1e-12));

  Histogram q = two_bin(0.25);
  DistanceReport rep = ckp_check(p, q);
  CHECK(rep.l1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::sqrt(2 * rep.rel_entropy) == doctest::Approx(0.53636).epsilon(1e-4));
  CHECK(rep.ckp_margin == doctest::Approx(0.03636).epsilon(1e-3));
}

TEST_CASE("Gibbs and CKP hold on 1000 random histogram pairs") {
  std::mt19937_64 rng(20260826);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int bins = 2 + static_cast<int>(rng() % 15);
    Histogram p = Histogram::regular(1, bins, 0.0, 1.0);
    Histogram q = Histogram::regular(1, bins, 0.0, 1.0);
    double sp = 0, sq = 0;
    p.mass.assign(bins, 0.0);
    q.mass.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) {
      p.mass[b] = u(rng);
      q.mass[b] = u(rng);
      sp += p.mass[b];
      sq += q.mass[b];
    }
    for (int b = 0; b < bins; ++b) {
      p.mass[b] /= sp;
      q.mass[b] /= sq;
    }
    p.samples = q.samples = 1;
    DistanceReport rep = ckp_check(p, q);  // throws on any violation
    CHECK(rep.rel_entropy >= -1e-12);
    CHECK(rep.ckp_margin >= -1e-9);
  }
}

TEST_CASE("histogram plumbing: locate clamps, normalize, rate_bins") {
  Histogram h = Histogram::regular(2, 4, -1.0, 1.0);
  CHECK(h.size() == 16);
  CHECK(h.bin_volume() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(h.locate(0, -2.0) == 0);
  CHECK(h.locate(0, 2.0) == 3);
  CHECK(h.locate(0, -0.4) == 1);
  h.add_sample({0.9, -0.9});
  h.add_sample({0.9, -0.9});
  h.add_sample({-0.9, 0.9});
  h.normalize();
  h.validate();
  CHECK(h.samples == 3);

  // bins per dimension = 2 round(M^{1/(d+2)}).
  CHECK(rate_bins(100, 3) == 2 * static_cast<int>(std::lround(std::pow(100.0, 0.2))));
  CHECK(rate_bins(100000, 3) == 2 * static_cast<int>(std::lround(std::pow(1e5, 0.2))));
}

TEST_CASE("empirical_density: single particle at a node reproduces the bump") {
  Grid g{3, 32, 4.0};
  ParticleState st;
  st.resize(1, 2);
  st.x[0] = {g.coord(16), g.coord(4)};  // 0 and -3
  st.y[0] = {g.coord(16), g.coord(4)};
  st.z[0] = {g.coord(16), g.coord(4)};
  const double bw = 4 * g.h();
  DensityField f = empirical_density(st, 0, bw, g);
  CHECK(f.mass(0) == doctest::Approx(1.0).epsilon(1e-10));

  // Profile proportional to chi(r/bw): compare the node value ratio against
  // the mollifier shape at two radii inside the bump of the first particle.
  MollifierSpec moll = MollifierSpec::from_eps(bw, 3);
  const double c0 = f.species[0][g.index(16, 16, 16)];
  const double c1 = f.species[0][g.index(18, 16, 16)];
  CHECK(c0 > 0.0);
  const double ratio = mollifier_value(2 * g.h(), moll) / mollifier_value(0.0, moll);
  CHECK(c1 / c0 == doctest::Approx(ratio).epsilon(1e-9));

  // Bandwidth below 2h is rejected.
  CHECK_THROWS_AS(empirical_density(st, 0, 0.5 * g.h(), g), UsageError);
}

TEST_CASE("empirical_density: Brownian cloud approaches the heat solution") {
  // a = 0 sanity experiment: L1 distance to the analytic heat solution
  // decreases as N grows.
  Grid g{3, 32, 8.0};
  const double sigma = 1.0, w = 1.0, T = 0.1;
  auto l1_at = [&](std::uint64_t N, std::uint64_t seed) {
    ParticleState st;
    st.resize(1, N);
    st.t = T;
    const double var = w * w + 2 * sigma * T;
    for (std::uint64_t i = 0; i < N; ++i) {
      NormalStream ns(seed, RngPurpose::kGeneric, 0, static_cast<std::uint32_t>(i));
      double n0, n1, n2, n3;
      ns.normal_pair(0, 0, n0, n1);
      ns.normal_pair(1, 0, n2, n3);
      st.x[0][i] = std::sqrt(var) * n0;
      st.y[0][i] = std::sqrt(var) * n1;
      st.z[0][i] = std::sqrt(var) * n2;
    }
    DensityField f = empirical_density(st, 0, 4 * g.h(), g);
    double l1 = 0;
    const double h3 = std::pow(g.h(), 3);
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        for (int k = 0; k < g.m; ++k) {
          const double exact = wrapped_gaussian_1d(g.coord(i), var, g.L) *
                               wrapped_gaussian_1d(g.coord(j), var, g.L) *
                               wrapped_gaussian_1d(g.coord(k), var, g.L);
          l1 += std::abs(f.species[0][g.index(i, j, k)] - exact) * h3;
        }
    return l1;
  };
  const double d_small = l1_at(200, 17);
  const double d_large = l1_at(5000, 17);
  CHECK(d_large < d_small);
}

TEST_CASE("marginal_histogram: preconditions and unit mass") {
  Grid g{3, 32, 4.0};
  std::vector<ParticleState> reps;
  for (int r = 0; r < 40; ++r) {
    ParticleState st;
    st.resize(2, 4);
    for (int a = 0; a < 2; ++a)
      for (int i = 0; i < 4; ++i) {
        NormalStream ns(500 + r, RngPurpose::kGeneric, a, i);
        double n0, n1, n2, n3;
        ns.normal_pair(0, 0, n0, n1);
        ns.normal_pair(1, 0, n2, n3);
        st.x[a][i] = n0;
        st.y[a][i] = n1;
        st.z[a][i] = n2;
      }
    reps.push_back(st);
  }
  Histogram h = marginal_histogram(reps, {1, 0}, g, 8);
  h.validate();
  CHECK(h.dims() == 3);
  double tot = 0;
  for (double m : h.mass) tot += m;
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));

  // d * |K| > 3 is rejected with advice to reduce K.
  CHECK_THROWS_AS(marginal_histogram(reps, {1, 1}, g, 4), UsageError);
  // Fewer than 30 replications is rejected.
  std::vector<ParticleState> few(reps.begin(), reps.begin() + 10);
  CHECK_THROWS_AS(marginal_histogram(few, {1, 0}, g, 8), UsageError);
}

TEST_CASE("marginal_histogram: a = 0 marginal approaches the heat solution") {
  // Brownian particles; the one-particle marginal over replications must get
  // closer (in L1 over common bins) to the analytic heat solution as the
  // replication count grows.
  Grid g{3, 32, 8.0};
  const double var = 1.0 + 2 * 1.0 * 0.1;  // w=1, sigma=1, T=0.1
  auto build = [&](int nreps, std::uint64_t seed) {
    std::vector<ParticleState> reps;
    for (int r = 0; r < nreps; ++r) {
      ParticleState st;
      st.resize(1, 2);
      for (int i = 0; i < 2; ++i) {
        NormalStream ns(seed + r, RngPurpose::kGeneric, 0, i);
        double n0, n1, n2, n3;
        ns.normal_pair(0, 0, n0, n1);
        ns.normal_pair(1, 0, n2, n3);
        st.x[0][i] = std::sqrt(var) * n0;
        st.y[0][i] = std::sqrt(var) * n1;
        st.z[0][i] = std::sqrt(var) * n2;
      }
      reps.push_back(st);
    }
    return reps;
  };
  // Analytic reference binned on the same sigma-algebra.
  std::vector<double> ref(g.cells());
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j)
      for (int k = 0; k < g.m; ++k)
        ref[g.index(i, j, k)] = wrapped_gaussian_1d(g.coord(i), var, g.L) *
                                wrapped_gaussian_1d(g.coord(j), var, g.L) *
                                wrapped_gaussian_1d(g.coord(k), var, g.L);
  const int bins = 8;
  Histogram href = histogram_from_density(g, ref, g, bins);

  auto l1 = [&](int nreps) {
    Histogram h = marginal_histogram(build(nreps, 9000), {1}, g, bins);
    double d = 0;
    for (std::size_t b = 0; b < h.mass.size(); ++b) d += std::abs(h.mass[b] - href.mass[b]);
    return d;
  };
  const double d_small = l1(60);
  const double d_large = l1(2000);
  CHECK(d_large < d_small);
}

TEST_CASE("marginal_histogram: independent species factorize (low MI)") {
  // Block-diagonal a = 0 dynamics: species are independent, so the joint
  // histogram of (x of particle 1 of species 1, x of particle 1 of species
  // 2) has mutual information at the statistical noise floor.
  const int nreps = 4000;
  Histogram joint = Histogram::regular(2, 6, -4.0, 4.0);
  Histogram m1 = Histogram::regular(1, 6, -4.0, 4.0);
  Histogram m2 = Histogram::regular(1, 6, -4.0, 4.0);
  for (int r = 0; r < nreps; ++r) {
    NormalStream a(31000 + r, RngPurpose::kGeneric, 0, 0);
    NormalStream b(31000 + r, RngPurpose::kGeneric, 1, 0);
    double x1, x2, u;
    a.normal_pair(0, 0, x1, u);
    b.normal_pair(0, 0, x2, u);
    joint.add_sample({x1, x2});
    m1.add_sample({x1});
    m2.add_sample({x2});
  }
  joint.normalize();
  m1.normalize();
  m2.normalize();
  Histogram prod = joint;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) prod.mass[i * 6 + j] = m1.mass[i] * m2.mass[j];
  // Mutual information = H(joint | product of marginals).
  const double mi = relative_entropy_smoothed(joint, prod);
  // Noise floor approx (bins^2 - 1) / (2 nreps) for independent data.
  CHECK(mi < 3.0 * 35.0 / (2.0 * nreps));
}

TEST_CASE("lln statistics: degenerate and constant test functions") {
  Grid g{3, 32, 4.0};
  // psi = grad V_eps, all particles at one point: every pairwise evaluation
  // is grad V_eps(0) = 0, and a zero convolution field gives deviation 0.
  KernelTable table =
      build_kernel_table({1.0, 3}, MollifierSpec::from_eps(1.0, 3), 256, 64.0);
  ParticleState st;
  st.resize(1, 8);
  for (int i = 0; i < 8; ++i) {
    st.x[0][i] = 0.5;
    st.y[0][i] = -0.25;
    st.z[0][i] = 0.0;
  }
  GradientFields conv;
  conv.per_species.resize(1);
  for (int c = 0; c < 3; ++c) conv.per_species[0][c].assign(g.cells(), 0.0);
  LlnResult r = lln_statistic_grad(st, table, conv, g, 0.0);
  CHECK(r.max_deviation == 0.0);
  CHECK(r.threshold == 1.0);
  CHECK(!r.exceeded);

  // psi = K_eps on its flat cap: all pairwise values equal the cap value
  // (4 eps)^{-(s+2)}; a convolution field equal to that constant cancels the
  // empirical average exactly (the constants-cancel example).
  const double eps = 1.0, s = 1.0;
  const double cap = std::pow(4 * eps, -(s + 2));
  std::vector<std::vector<double>> kc(1, std::vector<double>(g.cells(), cap));
  LlnResult rk = lln_statistic_aux(st, eps, s, kc, g, 0.3);
  CHECK(rk.max_deviation == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(!rk.exceeded);

  CHECK_THROWS_AS(lln_statistic_grad(st, table, conv, g, 0.7), UsageError);
}

TEST_CASE("wilson_interval: frozen oracle values") {
  double lo, mid, hi;
  // k=0: interval starts at 0.
  wilson_interval(0, 50, lo, mid, hi);
  CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mid > 0.0);
  CHECK(hi < 0.1);
  // k=m: interval ends at 1.
  wilson_interval(50, 50, lo, mid, hi);
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
  // Textbook case k=10, m=50 (z=1.96): mid = (10 + z^2/2)/(50 + z^2).
  wilson_interval(10, 50, lo, mid, hi);
  const double z = 1.959963984540054;
  CHECK(mid == doctest::Approx((10 + z * z / 2) / (50 + z * z)).epsilon(1e-12));
  CHECK(lo > 0.1);
  CHECK(hi < 0.35);
  CHECK_THROWS_AS(wilson_interval(1, 0, lo, mid, hi), UsageError);
}

TEST_CASE("coupling_event: zero at t = 0 and for a = 0; lambda range gate") {
  SimConfig c;
  c.n = 1;
  c.N = 8;
  c.riesz = {1.0, 3};
  c.moll = MollifierSpec::from_ell(0.1, c.N, 3);
  c.a.n = 1;
  c.a.a = {0.0};
  c.species.resize(1);
  c.species[0].init.width = 1.0;
  c.T = 0.02;
  c.dt = 0.01;
  c.box = {3, 32, 8.0};

  PdeConfig pc;
  pc.grid = c.box;
  pc.riesz = c.riesz;
  pc.a = c.a;
  pc.species = c.species;
  pc.T = c.T;
  pc.dt = 0.01;
  pc.eps = c.moll.epsilon;
  PdeResult pde = solve_pde(pc, 3);

  KernelTable table = kernel_table_cached(c.riesz, c.moll, 256, 64.0);
  std::vector<CoupledResult> runs;
  for (int r = 0; r < 4; ++r) {
    SimConfig cr = c;
    cr.seed = 100 + r;
    runs.push_back(simulate_coupled(cr, table, pde.gradients));
  }
  CouplingStats st = coupling_event(runs, 0.2, c);
  REQUIRE(!st.prob.empty());
  CHECK(st.times.front() == doctest::Approx(0.0));
  CHECK(st.prob.front() == 0.0);  // shared initial data
  for (double p : st.prob) CHECK(p == 0.0);  // a = 0: identical paths
  for (std::size_t i = 0; i < st.prob.size(); ++i) {
    CHECK(st.wilson_lo[i] <= st.prob[i] + 1e-12);
    CHECK(st.wilson_hi[i] >= st.prob[i] - 1e-12);
  }

  // lambda must sit inside (ell, 1/2 - ell(s+1)) = (0.1, 0.3).
  CHECK_THROWS_AS(coupling_event(runs, 0.05, c), UsageError);
  CHECK_THROWS_AS(coupling_event(runs, 0.35, c), UsageError);
}

TEST_CASE("subadditivity: product joint gives lhs = rhs = 0") {
  DiscreteJoint j;
  j.n = 1;
  j.N = 2;
  j.states = 2;
  const std::vector<double> one{0.3, 0.7};
  j.p.resize(4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) j.p[a * 2 + b] = one[a] * one[b];
  SubaddResult r = subadditivity_check(j, {one}, {1});
  CHECK(r.lhs == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.rhs == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.holds);
}

TEST_CASE("subadditivity: correlated 2-particle joint via exact enumeration") {
  // n=1, N=2, 2 states, symmetric correlated joint.
  DiscreteJoint j;
  j.n = 1;
  j.N = 2;
  j.states = 2;
  j.p = {0.4, 0.1, 0.1, 0.4};
  REQUIRE(j.exchangeable());
  const std::vector<double> tilde{0.5, 0.5};

  SubaddResult r = subadditivity_check(j, {tilde}, {1});
  // Exact oracle: 1-marginal is (0.5, 0.5) = tilde, so lhs = 0; full
  // entropy H(j | tilde x tilde) = sum p log(p / 0.25).
  const double h_full = 0.4 * std::log(0.4 / 0.25) * 2 + 0.1 * std::log(0.1 / 0.25) * 2;
  CHECK(r.lhs == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.rhs == doctest::Approx(0.5 * h_full).epsilon(1e-12));
  CHECK(r.holds);

  // K = N: lhs equals the full relative entropy, rhs carries factor N/N = 1.
  SubaddResult full = subadditivity_check(j, {tilde}, {2});
  CHECK(full.lhs == doctest::Approx(h_full).epsilon(1e-12));
  CHECK(full.rhs == doctest::Approx(h_full).epsilon(1e-12));
  CHECK(full.holds);
}

TEST_CASE("subadditivity: non-exchangeable joints are rejected") {
  DiscreteJoint j;
  j.n = 1;
  j.N = 2;
  j.states = 2;
  j.p = {0.4, 0.3, 0.1, 0.2};  // p(0,1) != p(1,0)
  CHECK(!j.exchangeable());
  CHECK_THROWS_AS(subadditivity_check(j, {{0.5, 0.5}}, {1}), InvariantViolation);
}

TEST_CASE("subadditivity and data processing on randomized joints") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 2 + static_cast<int>(rng() % 3);  // 2..4
    const int states = 2 + static_cast<int>(rng() % 2);
    DiscreteJoint j;
    j.n = 1;
    j.N = N;
    j.states = states;
    const std::size_t sz = j.size();
    // Random positive tensor, symmetrized over particle permutations by
    // accumulating all digit orderings.
    std::vector<double> raw(sz);
    for (double& v : raw) v = u(rng);
    j.p.assign(sz, 0.0);
    std::vector<int> digits(N);
    for (std::size_t idx = 0; idx < sz; ++idx) {
      std::size_t t = idx;
      for (int k = 0; k < N; ++k) {
        digits[k] = static_cast<int>(t % states);
        t /= states;
      }
      std::sort(digits.begin(), digits.end());
      // Canonical representative: sorted digits.
      std::size_t canon = 0;
      for (int k = N - 1; k >= 0; --k) canon = canon * states + digits[k];
      j.p[idx] = raw[canon];
    }
    double tot = 0;
    for (double v : j.p) tot += v;
    for (double& v : j.p) v /= tot;
    REQUIRE(j.exchangeable());

    std::vector<double> tilde(states);
    double ts = 0;
    for (double& v : tilde) {
      v = u(rng);
      ts += v;
    }
    for (double& v : tilde) v /= ts;

    const int K = 1 + static_cast<int>(rng() % N);
    SubaddResult r = subadditivity_check(j, {tilde}, {K});
    CHECK(r.holds);
    // Data processing: the K-marginal entropy never exceeds the full one.
    SubaddResult fullr = subadditivity_check(j, {tilde}, {N});
    CHECK(r.lhs <= fullr.lhs + 1e-12);
  }
}

TEST_CASE("histogram_from_density matches direct cell aggregation") {
  Grid g{3, 32, 4.0};
  std::vector<double> f(g.cells());
  double tot = 0;
  for (std::size_t c = 0; c < g.cells(); ++c) {
    f[c] = 1.0 + std::sin(0.01 * static_cast<double>(c));
    tot += f[c];
  }
  const double h3 = std::pow(g.h(), 3);
  for (double& v : f) v /= tot * h3;
  Histogram h = histogram_from_density(g, f, g, 4);
  h.validate();
  // 8x8x8 grid cells per histogram bin; check one bin by direct summation.
  double acc = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) acc += f[g.index(i, j, k)] * h3;
  CHECK(h.mass[0] == doctest::Approx(acc).epsilon(1e-12));
}
