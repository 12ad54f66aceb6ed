#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "msad/common.hpp"

namespace msad {

struct QuadratureResult {
  double value = 0;
  double error = 0;  // worst-interval residual estimate
};

// Adaptive Gauss-Kronrod (G7, K15) on [a, b]. Splits the worst interval
// until the summed error estimate meets abs/rel tolerance.
QuadratureResult integrate_gk(const std::function<double(double)>& f, double a, double b,
                              double rel_tol = 1e-10, double abs_tol = 1e-14,
                              int max_intervals = 2000);

// Same, with interior breakpoints (integrand kinks/jumps).
QuadratureResult integrate_gk_split(const std::function<double(double)>& f, double a, double b,
                                    const std::vector<double>& breaks, double rel_tol = 1e-10,
                                    double abs_tol = 1e-14);

// Monotone cubic Hermite interpolant (Fritsch-Carlson slopes) on a strictly
// increasing, possibly nonuniform grid.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y);

  double operator()(double xq) const;
  double derivative(double xq) const;
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

 private:
  std::size_t find_interval(double xq) const;
  std::vector<double> x_, y_, d_;  // nodes, values, node slopes
};

}  // namespace msad
