#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "msad/kernels.hpp"
#include "msad/rng.hpp"

using namespace msad;

namespace {

KernelTable table_for(double s, double eps, int points = 512, double r_max = 24.0) {
  return build_kernel_table(RieszSpec{s, 3}, MollifierSpec::from_eps(eps), points, r_max);
}

// Brute-force 3-D midpoint quadrature of (V * chi_eps)(r e_x) over the
// mollifier support; independent of the radial reduction used by the table.
double conv_bruteforce(double s, double eps, double r, int m = 64) {
  const MollifierSpec moll = MollifierSpec::from_eps(eps);
  const double h = 2.0 * eps / m;
  double acc = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const Vec3 y{-eps + (i + 0.5) * h, -eps + (j + 0.5) * h, -eps + (k + 0.5) * h};
        const double chi = mollifier_value(y.norm(), moll);
        if (chi == 0) continue;
        const Vec3 d{r - y.x, -y.y, -y.z};
        acc += chi * std::pow(d.norm(), -s);
      }
  return acc * h * h * h;
}

}  // namespace

TEST_CASE("riesz potential direct evaluations") {
  RieszSpec spec{1.0, 3};
  CHECK(riesz_potential({2, 0, 0}, spec) == doctest::Approx(0.5));
  CHECK(riesz_potential({0, 1, 0}, spec) == doctest::Approx(1.0));
  RieszSpec half{0.5, 3};
  CHECK(riesz_potential({0, 0, 1}, half) == doctest::Approx(1.0));
  CHECK(riesz_potential({0.5, 0, 0}, spec) == doctest::Approx(2.0));
  CHECK_THROWS_AS(riesz_potential({0, 0, 0}, spec), std::domain_error);
}

TEST_CASE("mollifier support and normalization") {
  MollifierSpec moll = MollifierSpec::from_eps(0.3);
  CHECK(mollifier_value(0.3, moll) == 0.0);
  CHECK(mollifier_value(0.6, moll) == 0.0);
  CHECK(mollifier_value(0.0, moll) > 0.0);

  // Numerical integration oracle: composite Simpson on the radial profile,
  // independent of the Gauss-Kronrod normalization path.
  for (double eps : {0.1, 0.3, 1.0}) {
    MollifierSpec m = MollifierSpec::from_eps(eps);
    const int n = 20000;
    const double h = eps / n;
    double acc = 0;
    for (int i = 0; i <= n; ++i) {
      const double r = i * h;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * mollifier_value(r, m) * r * r;
    }
    acc *= h / 3.0 * 4.0 * kPi;
    CHECK(std::abs(acc - 1.0) < 1e-8);
  }
}

TEST_CASE("mollifier spec: eps = N^-ell exactly") {
  MollifierSpec m = MollifierSpec::from_ell(0.1, 1024);
  CHECK(m.epsilon == std::pow(1024.0, -0.1));
  CHECK_THROWS_AS(MollifierSpec::from_eps(0.0), UsageError);
}

TEST_CASE("interaction matrix accessors") {
  InteractionMatrix a{2, {0.05, -0.03, -0.03, 0.05}};
  a.validate();
  CHECK(a.at(0, 1) == -0.03);
  CHECK(a.max_abs() == doctest::Approx(0.05));
  CHECK(a.row_abs_sum(0) == doctest::Approx(0.08));
  InteractionMatrix bad{2, {1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("riesz spec invariants") {
  CHECK_THROWS_AS((RieszSpec{1.5, 3}.validate()), UsageError);
  CHECK_THROWS_AS((RieszSpec{1.0, 2}.validate()), UsageError);
  CHECK_THROWS_AS((RieszSpec{0.0, 3}.validate()), UsageError);
  RieszSpec{2.0, 4}.validate();
}

TEST_CASE("kernel table: Newton's theorem and brute-force cross-check") {
  KernelTable t = table_for(1.0, 0.1);
  // Newton: V * chi_eps = V outside the mollifier support for s = d-2.
  CHECK(std::abs(t.value(0.5) - 2.0) / 2.0 < 1e-6);
  // Newton exactness over all table radii >= 2 eps.
  for (double r : t.radii())
    if (r >= 0.2 && r < t.r_max()) {
      const double exact = std::pow(r, -1.0);
      CHECK(std::abs(t.value(r) - exact) / exact < 1e-6);
    }
  // Interior point against brute-force 3-D quadrature.
  const double bf = conv_bruteforce(1.0, 0.1, 0.05);
  CHECK(std::abs(t.value(0.05) - bf) / bf < 2e-3);
  // Sub-Coulomb exponent too.
  KernelTable th = table_for(0.5, 0.2);
  const double bfh = conv_bruteforce(0.5, 0.2, 0.1);
  CHECK(std::abs(th.value(0.1) - bfh) / bfh < 2e-3);
}

TEST_CASE("kernel table: origin behavior and profile shape") {
  KernelTable t = table_for(1.0, 0.1);
  CHECK(t.g_eps().front() == 0.0);  // radial symmetry at r = 0
  CHECK(std::isfinite(t.v_eps().front()));
  // Monotone decreasing potential profile.
  const auto& v = t.v_eps();
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] <= v[i - 1] + 1e-12);
  // v(0) <= C eps^{-s} with stable constant across eps.
  KernelTable t2 = table_for(1.0, 0.05);
  const double c1 = t.v_eps().front() * 0.1;
  const double c2 = t2.v_eps().front() * 0.05;
  CHECK(std::abs(c1 - c2) / c1 < 0.02);
}

TEST_CASE("gradient evaluation") {
  KernelTable t = table_for(1.0, 0.1);
  SUBCASE("zero at origin and zero coupling") {
    const Vec3 z = t.grad({0, 0, 0}, 1.0);
    CHECK(z.norm2() == 0.0);
    const Vec3 z2 = t.grad({0.3, 0.2, -0.1}, 0.0);
    CHECK(z2.norm2() == 0.0);
  }
  SUBCASE("Newton far field magnitude") {
    const Vec3 g = t.grad({0.5, 0, 0}, 1.0);
    CHECK(std::abs(g.norm() - 4.0) < 1e-5);
    CHECK(g.x < 0);  // repulsive potential decreases outward
  }
  SUBCASE("oddness is exact") {
    const Vec3 x{0.07, -0.03, 0.02};
    const Vec3 gp = t.grad(x, 1.3);
    const Vec3 gm = t.grad(-x, 1.3);
    CHECK(gp.x == -gm.x);
    CHECK(gp.y == -gm.y);
    CHECK(gp.z == -gm.z);
  }
  SUBCASE("beyond r_max the closed form applies for any s") {
    KernelTable th = table_for(0.5, 0.1, 256, 4.0);
    const double r = 8.0;  // > r_max
    const Vec3 g = th.grad({r, 0, 0}, 1.0);
    CHECK(g.norm() == doctest::Approx(0.5 * std::pow(r, -1.5)).epsilon(1e-12));
  }
}

TEST_CASE("auxiliary K branches") {
  const double eps = 0.1, s = 1.0;
  const double plateau = std::pow(4 * eps, -(s + 2));
  CHECK(auxiliary_K({4 * eps, 0, 0}, eps, s) == doctest::Approx(plateau));
  CHECK(auxiliary_K({0, 0, 0}, eps, s) == doctest::Approx(plateau));
  CHECK(auxiliary_K({0, 8 * eps, 0}, eps, s) ==
        doctest::Approx(std::pow(8 * eps, -3.0)));
}

TEST_CASE("sup bound scaling across eps (Remark 3.3)") {
  KernelTable ta = table_for(1.0, 0.2);
  KernelTable tb = table_for(1.0, 0.1);
  const double r1 = measure_sup_bounds(tb, 1) / measure_sup_bounds(ta, 1);
  CHECK(std::abs(r1 - std::pow(2.0, 1.0 + 1.0)) / std::pow(2.0, 2.0) < 0.10);
  const double r2 = measure_sup_bounds(tb, 2) / measure_sup_bounds(ta, 2);
  CHECK(std::abs(r2 - std::pow(2.0, 2.0 + 1.0)) / std::pow(2.0, 3.0) < 0.15);
  CHECK_THROWS_AS(measure_sup_bounds(ta, 3), UsageError);
}

TEST_CASE("Lipschitz surrogate (Eq. ineq C3): fit then verify") {
  KernelTable t = table_for(1.0, 0.1);
  // Fit C3 on a calibration sample, freeze, then verify on fresh draws.
  const double c3 = 1.1 * lipschitz_surrogate_ratio(t, 2000, 7001, 1.0);
  const double worst = lipschitz_surrogate_ratio(t, 1000, 9911, 1.0);
  CHECK(worst <= c3 * (1.0 + 1e-6));
}

TEST_CASE("table persistence and cache") {
  KernelTable t = table_for(1.0, 0.15, 128, 8.0);
  const std::string path = "ktab_test.msadk";
  t.save(path);
  KernelTable u = KernelTable::load(path);
  CHECK(u.s() == t.s());
  CHECK(u.eps() == t.eps());
  CHECK(u.radii() == t.radii());
  CHECK(u.v_eps() == t.v_eps());
  CHECK(u.g_eps() == t.g_eps());
  CHECK(u.value(0.5) == t.value(0.5));
  std::filesystem::remove(path);

  setenv("MSAD_CACHE_DIR", "cache_test_dir", 1);
  KernelTable c1 = kernel_table_cached(RieszSpec{1.0, 3},
                                       MollifierSpec::from_eps(0.15), 128, 8.0);
  KernelTable c2 = kernel_table_cached(RieszSpec{1.0, 3},
                                       MollifierSpec::from_eps(0.15), 128, 8.0);
  CHECK(c1.v_eps() == c2.v_eps());
  std::filesystem::remove_all("cache_test_dir");
  unsetenv("MSAD_CACHE_DIR");
}

TEST_CASE("build preconditions") {
  CHECK_THROWS_AS(table_for(1.0, 0.1, 32), UsageError);   // n_points >= 64
  CHECK_THROWS_AS(table_for(1.0, 5.0, 128, 6.0), UsageError);  // r_max too small
}
