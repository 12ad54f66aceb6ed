#include "msad/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace msad {

void Grid::validate() const {
  if (d != 3) throw UsageError("grid: this build supports d = 3 only");
  if (m < 32 || m % 2 != 0) throw UsageError("grid: m must be even and >= 32");
  if (!(L > 0)) throw UsageError("grid: half-width L must be positive");
}

double DensityField::mass(int alpha) const {
  double h3 = grid.h() * grid.h() * grid.h();
  double s = 0;
  for (double v : species[alpha]) s += v;
  return s * h3;
}

double DensityField::clip_and_renormalize(int alpha) {
  auto& f = species[alpha];
  double h3 = grid.h() * grid.h() * grid.h();
  double clipped = 0, total = 0;
  for (double& v : f) {
    if (v < 0) {
      if (v < -1e-14) clipped += -v;
      v = 0;
    }
    total += v;
  }
  if (total <= 0) throw RuntimeFailure("density field: species lost all mass");
  double scale = 1.0 / (total * h3);
  for (double& v : f) v *= scale;
  return clipped * h3;
}

void DensityField::validate() const {
  grid.validate();
  for (int a = 0; a < n(); ++a) {
    for (double v : species[a])
      if (v < -1e-14 || !std::isfinite(v))
        throw InvariantViolation("density field: negative or non-finite value");
    double m = mass(a);
    if (std::abs(m - 1.0) > 1e-10)
      throw InvariantViolation("density field: species mass " + std::to_string(m) +
                               " deviates from 1");
  }
}

double interpolate_trilinear(const Grid& g, const std::vector<double>& field, const Vec3& x) {
  const double h = g.h();
  double fx = (g.min_image(x.x) + g.L) / h;
  double fy = (g.min_image(x.y) + g.L) / h;
  double fz = (g.min_image(x.z) + g.L) / h;
  int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy)),
      k0 = static_cast<int>(std::floor(fz));
  double tx = fx - i0, ty = fy - j0, tz = fz - k0;
  int i1 = g.wrap(i0 + 1), j1 = g.wrap(j0 + 1), k1 = g.wrap(k0 + 1);
  i0 = g.wrap(i0);
  j0 = g.wrap(j0);
  k0 = g.wrap(k0);
  double c000 = field[g.index(i0, j0, k0)], c100 = field[g.index(i1, j0, k0)];
  double c010 = field[g.index(i0, j1, k0)], c110 = field[g.index(i1, j1, k0)];
  double c001 = field[g.index(i0, j0, k1)], c101 = field[g.index(i1, j0, k1)];
  double c011 = field[g.index(i0, j1, k1)], c111 = field[g.index(i1, j1, k1)];
  double c00 = c000 * (1 - tx) + c100 * tx;
  double c10 = c010 * (1 - tx) + c110 * tx;
  double c01 = c001 * (1 - tx) + c101 * tx;
  double c11 = c011 * (1 - tx) + c111 * tx;
  double c0 = c00 * (1 - ty) + c10 * ty;
  double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

// ---- persistence (magic "MSADF1") ------------------------------------------

namespace {
constexpr char kMagic[6] = {'M', 'S', 'A', 'D', 'F', '1'};
}

void DensityField::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open for write: " + path);
  os.write(kMagic, 6);
  double hdr[5] = {static_cast<double>(n()), static_cast<double>(grid.d),
                   static_cast<double>(grid.m), grid.L, t};
  os.write(reinterpret_cast<char*>(hdr), sizeof(hdr));
  for (const auto& f : species)
    os.write(reinterpret_cast<const char*>(f.data()), 8 * f.size());
}

DensityField DensityField::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open: " + path);
  char magic[6];
  is.read(magic, 6);
  if (std::memcmp(magic, kMagic, 6) != 0)
    throw RuntimeFailure("bad magic in field file " + path + " at offset 0");
  double hdr[5];
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  DensityField f;
  int n = static_cast<int>(hdr[0]);
  f.grid.d = static_cast<int>(hdr[1]);
  f.grid.m = static_cast<int>(hdr[2]);
  f.grid.L = hdr[3];
  f.t = hdr[4];
  f.grid.validate();
  f.species.assign(n, std::vector<double>(f.grid.cells()));
  for (auto& sp : f.species) is.read(reinterpret_cast<char*>(sp.data()), 8 * sp.size());
  if (!is) throw RuntimeFailure("truncated field file: " + path);
  return f;
}

}  // namespace msad
