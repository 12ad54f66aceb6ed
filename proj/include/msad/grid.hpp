#pragma once

#include <string>
#include <vector>

#include "msad/common.hpp"

namespace msad {

// Periodic box [-L, L)^3, m points per dimension, cell size h = 2L/m.
struct Grid {
  int d = 3;
  int m = 48;
  double L = 12.0;

  double h() const { return 2.0 * L / m; }
  std::size_t cells() const {
    return static_cast<std::size_t>(m) * m * m;
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * m + j) * m + k;
  }
  // Node coordinate of index i along one axis, in [-L, L).
  double coord(int i) const { return -L + i * h(); }
  // Minimum-image displacement component.
  double min_image(double x) const {
    while (x >= L) x -= 2 * L;
    while (x < -L) x += 2 * L;
    return x;
  }
  int wrap(int i) const {
    i %= m;
    return i < 0 ? i + m : i;
  }
  void validate() const;

  bool operator==(const Grid&) const = default;
};

// Per-species nonnegative grid functions with unit mass.
struct DensityField {
  Grid grid;
  double t = 0;
  std::vector<std::vector<double>> species;  // [n][m^3], cell values

  int n() const { return static_cast<int>(species.size()); }
  double mass(int alpha) const;
  // Clips values below -1e-14 tolerance to zero and renormalizes to unit
  // mass; returns the clipped mass fraction.
  double clip_and_renormalize(int alpha);
  void validate() const;

  void save(const std::string& path) const;
  static DensityField load(const std::string& path);
};

// Trilinear interpolation with periodic wrap; positions outside the box are
// wrapped (callers may count wraps).
double interpolate_trilinear(const Grid& g, const std::vector<double>& field, const Vec3& x);

}  // namespace msad
