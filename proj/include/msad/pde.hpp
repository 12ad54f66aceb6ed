#pragma once

#include <array>
#include <functional>
#include <vector>

#include "msad/grid.hpp"
#include "msad/kernels.hpp"
#include "msad/model.hpp"

namespace msad {

// Gradient fields G_beta = (grad V * f_beta) on the grid at one time.
struct GradientFields {
  double t = 0;
  // per_species[beta][c] is the c-th component, size grid.cells().
  std::vector<std::array<std::vector<double>, 3>> per_species;
};

// Gradient fields stored at uniformly spaced times for coupled runs.
struct GradientTimeline {
  Grid grid;
  std::vector<double> times;
  std::vector<GradientFields> frames;

  // -sum_beta a(alpha,beta) G_beta at x, trilinear in space, linear in time.
  Vec3 drift(const Vec3& x, int alpha, double t, const InteractionMatrix& a) const;
};

struct PdeResult {
  std::vector<DensityField> timeline;  // at config.output_times()
  GradientTimeline gradients;          // filled only when requested
  double max_clip_fraction = 0;        // worst per-step negative-mass clip
  int max_substeps = 1;
};

// Solve the n-species advection-diffusion system on the periodic box.
// gradient_frames > 0 additionally records the interaction gradient fields at
// that many uniformly spaced times (including both endpoints).
PdeResult solve_pde(const PdeConfig& cfg, int gradient_frames = 0);

// Periodic convolution of f with grad V (mollified when table != nullptr,
// raw Riesz gradient otherwise), via FFT; kernel truncated at the minimum
// image radius L, origin cell set to zero (odd symmetry).
std::array<std::vector<double>, 3> convolve_gradient(const Grid& grid,
                                                     const std::vector<double>& f,
                                                     const RieszSpec& riesz,
                                                     const KernelTable* table);

// Periodic convolution with a radial scalar kernel k(r), truncated at trunc_r.
std::vector<double> convolve_radial_scalar(const Grid& grid,
                                           const std::vector<double>& f,
                                           const std::function<double(double)>& kernel,
                                           double trunc_r);

// Grid L^p norm (p >= 1) and sup norm of one field.
double lp_norm(const Grid& grid, const std::vector<double>& f, double p);
double linf_norm(const std::vector<double>& f);

// L^p norms of every species at every output time: [time][species].
std::vector<std::vector<double>> lp_norm_timeline(const PdeResult& res, double p);

// Smallness condition Eq. (d+1 version, general integrability index p):
//   sum_beta |a_ab| ||f0_beta||_{L^p}^{2sp/(d(p-1))}
//     <= 4 sigma_alpha^2 / (p^2 C_HLS^2 C_GNS^2 sum_beta |a_ab|)   for all alpha.
struct SmallnessReport {
  bool satisfied = false;
  double p = 0;
  double c_hls = 0;  // sharp diagonal Hardy-Littlewood-Sobolev constant
  double c_gns = 0;  // sharp Sobolev (Gagliardo-Nirenberg) constant
  std::vector<double> lhs, rhs;  // per species alpha
};
SmallnessReport check_smallness(const PdeConfig& cfg, double p = 0 /* 0 -> d+1 */);

// Sample an initial density onto the grid and renormalize to unit mass.
DensityField sample_initial_density(const Grid& grid,
                                    const std::vector<SpeciesConfig>& species);

}  // namespace msad
