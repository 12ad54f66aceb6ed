#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msad/kernels.hpp"
#include "msad/model.hpp"
#include "msad/pde.hpp"

namespace msad {

// SoA particle positions: coords[alpha] holds x, y, z arrays of length N.
// Particles live in free space; the comparison box only enters diagnostics.
struct ParticleState {
  double t = 0;
  std::uint64_t step_index = 0;
  std::uint64_t N = 0;
  int n = 0;
  std::vector<std::vector<double>> x, y, z;  // [n][N]

  Vec3 get(int alpha, std::uint64_t i) const {
    return {x[alpha][i], y[alpha][i], z[alpha][i]};
  }
  void resize(int n_, std::uint64_t N_);
  double max_abs_coord() const;

  void save(const std::string& path, std::uint64_t seed) const;
  static ParticleState load(const std::string& path, std::uint64_t* seed_out = nullptr);
};

// Drift buffers, same shape as ParticleState positions.
struct DriftField {
  std::vector<std::vector<double>> x, y, z;
  void resize(int n, std::uint64_t N);
};

// N i.i.d. draws per species from the truncated-Gaussian initial density,
// deterministic in (seed, alpha, i) via rejection on counter slots.
ParticleState sample_initial(const SimConfig& cfg);

// Exact direct double sum: drift of (alpha, i) is
//   -(1/N) sum_beta a(alpha,beta) sum_j grad(V*chi_eps)(X_{alpha,i}-X_{beta,j}),
// self term included (it vanishes). Fixed summation order: beta-major, j
// ascending, so results are bit-identical under any thread partitioning.
void compute_drift(const ParticleState& st, const KernelTable& table,
                   const InteractionMatrix& a, DriftField& out);

// One Euler-Maruyama step: X += drift*dt + sqrt(2 sigma_alpha dt) * Z.
void step(ParticleState& st, const SimConfig& cfg, const KernelTable& table,
          DriftField& scratch);

struct SimResult {
  std::vector<ParticleState> snapshots;
  double max_abs_coord = 0;
};

SimResult simulate(const SimConfig& cfg, const KernelTable& table);

// Mean-field drift -sum_beta a(alpha,beta) (grad V_eps * f_beta)(x) read off
// the precomputed gradient frame; positions outside the box are wrapped and
// counted.
Vec3 drift_from_field(const Vec3& x, const GradientFields& frame, const Grid& grid,
                      const InteractionMatrix& a, int alpha,
                      std::uint64_t* wrap_counter = nullptr);

struct CoupledResult {
  std::vector<ParticleState> interacting;   // X, Eq. (X)
  std::vector<ParticleState> intermediate;  // X tilde, mean-field drift
  std::uint64_t wrap_count = 0;
};

// Coupled run: identical initial data and Brownian draws per (alpha, i,
// step); X uses pairwise forces, X tilde reads the gradient timeline.
CoupledResult simulate_coupled(const SimConfig& cfg, const KernelTable& table,
                               const GradientTimeline& fields);

// Intermediate system alone (mean-field drift only, O(N) per step).
SimResult simulate_intermediate(const SimConfig& cfg, const GradientTimeline& fields);

}  // namespace msad
