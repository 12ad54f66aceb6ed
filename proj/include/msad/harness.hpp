#pragma once

#include <string>
#include <vector>

#include "msad/metrics.hpp"
#include "msad/model.hpp"

namespace msad {

struct RatePrediction {
  double zeta = 0;
  double ell = 0, s = 0, varrho = 0;
  bool admissible = false;
  bool improved = false;
};

// zeta = min{ell, 1/2 - ell(s+2) - varrho}; improved variant uses s+1
// (Remark 1.3(iii)). Inadmissible ell still yields a value.
RatePrediction predicted_zeta(double ell, double s, double varrho,
                              bool improved = false);

struct ValidRanges {
  double ell_lo = 0, ell_hi = 0;        // (0, 1/(2s+4))
  double lambda_lo = 0, lambda_hi = 0;  // (ell, 1/2 - ell(s+1))
};
ValidRanges valid_ranges(double ell, double s, int d);

struct RateRow {
  double scale = 0;  // N or eps
  std::string metric;
  double value = 0;
  double err = 0;
  std::uint64_t reps = 0;
};

struct RateTable {
  std::string experiment;
  std::vector<RateRow> rows;
  bool fitted = false;
  double slope = 0, slope_err = 0, r2 = 0;
  std::vector<std::string> notes;

  void write_csv(const std::string& path, std::uint64_t seed) const;
  void write_plot_data(const std::string& path) const;
};

struct SlopeFit {
  double slope = 0, stderr_ = 0, r2 = 0;
};
// Weighted OLS on (log scale, log value); per-row err used as relative
// weight when positive.
SlopeFit fit_loglog_slope(const std::vector<RateRow>& rows);

// Prop. 2.4: sup_t(||ftilde - fbar||_{L2}^2 + H_smoothed) per eps, slope fit.
RateTable run_pde_error_experiment(const PdeConfig& cfg, const std::vector<double>& eps_list);

// Prop. 3.1: final-time coupling probability per N.
RateTable run_coupling_experiment(const SimConfig& cfg, const std::vector<std::uint64_t>& N_list,
                                  double lambda, int reps);

// Lemma 3.2: LLN exceedance frequency per N at fixed theta, psi = grad V_eps.
RateTable run_lln_experiment(const SimConfig& cfg, const std::vector<std::uint64_t>& N_list,
                             double theta, int reps);

// Theorem 1.2: one-particle marginal L1 distance to the limiting solution.
RateTable run_marginal_rate_experiment(const SimConfig& cfg,
                                       const std::vector<std::uint64_t>& N_list, int reps);

// Derives the PDE configuration matching a particle config on its box.
PdeConfig pde_config_from_sim(const SimConfig& cfg, bool mollified, double eps,
                              double pde_dt = 0);

}  // namespace msad
