#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "msad/common.hpp"
#include "msad/grid.hpp"
#include "msad/kernels.hpp"

namespace msad {

// Isotropic truncated Gaussian initial density (H4/H6): renormalized to
// probability mass 1 on the truncation ball. trunc_radius <= 0 means
// untruncated.
struct GaussianInit {
  Vec3 center{};
  double width = 1.0;
  double trunc_radius = 0;

  double effective_trunc() const { return trunc_radius > 0 ? trunc_radius : 1e30; }
  // Unnormalized radial profile exp(-r^2 / (2 width^2)) cut at the radius.
  double density(const Vec3& x) const;
  // L^p norm of the normalized density, by radial quadrature.
  double lp_norm(double p, int d = 3) const;
  void validate() const;
};

struct SpeciesConfig {
  double sigma = 1.0;  // diffusion coefficient (H3)
  GaussianInit init;

  void validate() const;
};

// Full particle-simulation configuration (assembles H1-H7).
struct SimConfig {
  int n = 1;
  std::uint64_t N = 0;
  RieszSpec riesz;
  MollifierSpec moll;
  InteractionMatrix a;
  std::vector<SpeciesConfig> species;
  double dt = 0;
  double T = 0;
  std::uint64_t seed = 0;
  Grid box;                          // comparison box for fields/diagnostics
  std::vector<double> output_times;  // empty: {0, T}

  double stability_cap() const;  // 0.1 * eps^{s+2}
  std::vector<double> resolved_output_times() const;
  void validate() const;
};

// PDE configuration for the intermediate (mollified) or limiting system.
struct PdeConfig {
  Grid grid;
  RieszSpec riesz;
  InteractionMatrix a;
  std::vector<SpeciesConfig> species;
  double dt = 0;
  double T = 0;
  std::optional<double> eps;  // set: intermediate system; unset: limiting
  int outputs = 9;            // geometric output cadence plus endpoints

  std::vector<double> output_times() const;
  void validate() const;
};

}  // namespace msad
