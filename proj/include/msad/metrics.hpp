#pragma once

#include <cstdint>
#include <vector>

#include "msad/grid.hpp"
#include "msad/kernels.hpp"
#include "msad/model.hpp"
#include "msad/particles.hpp"
#include "msad/pde.hpp"

namespace msad {

// Probability masses on a regular product grid over [lo, hi)^dims.
struct Histogram {
  std::vector<int> bins;            // per dimension
  std::vector<double> lo, hi;       // per dimension
  std::vector<double> mass;         // prod(bins) entries, row-major
  std::uint64_t samples = 0;

  int dims() const { return static_cast<int>(bins.size()); }
  std::size_t size() const;
  double bin_volume() const;
  int locate(int dim, double v) const;  // clamps into [0, bins[dim])
  void add_sample(const std::vector<double>& point, double weight = 1.0);
  void normalize();
  void validate() const;

  static Histogram regular(int dims, int bins_per_dim, double lo, double hi);
};

// Density-estimation-optimal bin count per dimension for rate experiments.
int rate_bins(std::uint64_t samples, int d);

struct RelEntropyResult {
  double value = 0;   // +inf when q vanishes on the support of p
  bool finite = true;
  std::vector<std::size_t> offending_bins;  // p > 0, q = 0
};

// Unrenormalised relative entropy sum p log(p/q), 0 log 0 = 0.
RelEntropyResult relative_entropy(const Histogram& p, const Histogram& q);

// Smoothed variant for rate plots: reference floored at 1e-12 and
// renormalized; always finite. Outputs carrying this value are labeled
// "smoothed".
double relative_entropy_smoothed(const Histogram& p, const Histogram& q);

struct DistanceReport {
  double rel_entropy = 0;
  double l1 = 0;
  double l2 = 0;          // density units (masses / bin volume)
  double ckp_margin = 0;  // sqrt(2H) - L1 >= -1e-9
};

// Asserts the Csiszar-Kullback-Pinsker inequality ||p-q||_1 <= sqrt(2 H(p|q)).
DistanceReport ckp_check(const Histogram& p, const Histogram& q);

// Mollified empirical measure chi^bw * mu_N deposited on the grid; each
// particle's bump is normalized on the grid so total mass is exactly 1.
DensityField empirical_density(const ParticleState& st, int alpha, double bandwidth,
                               const Grid& grid);

// Histogram over replicated final states of the designated particle tuple
// (first K_alpha particles per species); d * sum(K) <= 3.
Histogram marginal_histogram(const std::vector<ParticleState>& reps,
                             const std::vector<int>& K, const Grid& box,
                             int bins_per_dim);

// Bins a PDE density by cell-mass aggregation onto the same histogram
// sigma-algebra (3-d marginal of one species).
Histogram histogram_from_density(const Grid& grid, const std::vector<double>& f,
                                 const Grid& box, int bins_per_dim);

enum class PsiKind { kGradV, kAuxK };

struct LlnResult {
  double max_deviation = 0;
  double threshold = 0;  // N^{-theta}
  bool exceeded = false;
};

// Deviation max_{alpha,beta,i} |(1/N) sum_j psi(X_i - X_j) - (psi * f)(X_i)|
// with psi = grad V_eps; conv holds the precomputed grid convolutions.
LlnResult lln_statistic_grad(const ParticleState& st, const KernelTable& table,
                             const GradientFields& conv, const Grid& grid, double theta);
// Same with psi = K_eps (scalar); conv[beta] = K_eps * f_beta on the grid.
LlnResult lln_statistic_aux(const ParticleState& st, double eps, double s,
                            const std::vector<std::vector<double>>& conv,
                            const Grid& grid, double theta);

struct CouplingStats {
  double lambda = 0;
  std::uint64_t reps = 0;
  std::vector<double> times;
  std::vector<double> prob;      // Wilson midpoint shown separately
  std::vector<double> wilson_lo, wilson_hi, wilson_mid;
};

// Wilson 95% score interval for k successes out of m trials.
void wilson_interval(std::uint64_t k, std::uint64_t m, double& lo, double& mid, double& hi);

// Per-time empirical P(max_{alpha,i} |X - Xt| >= N^{-lambda}) over coupled
// replications; lambda must lie in (ell, 1/2 - ell(s+1)) (Eq. range lambda).
CouplingStats coupling_event(const std::vector<CoupledResult>& runs, double lambda,
                             const SimConfig& cfg);

// Exact discrete joint law of n*N particles, each with `states` states;
// index digits are particle-major within species, species-major overall.
struct DiscreteJoint {
  int n = 1;
  int N = 1;
  int states = 2;
  std::vector<double> p;  // states^(n*N) probabilities

  std::size_t size() const;
  bool exchangeable(double tol = 1e-12) const;
  void validate() const;
};

struct SubaddResult {
  double lhs = 0;  // H(f^{(K)} | prod tilde^{K_alpha})
  double rhs = 0;  // (max K_alpha / N) H(f_N | tilde^{N})
  bool holds = false;
};

// Lemma 2.2 on an exhaustively enumerable space; tilde[alpha] is the
// single-particle reference law of species alpha.
SubaddResult subadditivity_check(const DiscreteJoint& joint,
                                 const std::vector<std::vector<double>>& tilde,
                                 const std::vector<int>& K);

}  // namespace msad
