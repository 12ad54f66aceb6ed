#include "msad/quadrature.hpp"

#include <queue>

namespace msad {

namespace {

// Kronrod-15 nodes/weights on [-1,1]; Gauss-7 weights at the odd entries.
constexpr double kXgk[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769, -0.741531185599394,
    -0.586087235467691, -0.405845151377397, -0.207784955007898, 0.0,
    0.207784955007898,  0.405845151377397,  0.586087235467691,  0.741531185599394,
    0.864864423359769,  0.949107912342759,  0.991455371120813};
constexpr double kWgk[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
constexpr double kWg[7] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                           0.417959183673469, 0.381830050505119, 0.279705391489277,
                           0.129484966168870};

struct Interval {
  double a, b, value, error;
  bool operator<(const Interval& o) const { return error < o.error; }
};

Interval eval_gk(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double kron = 0, gauss = 0;
  for (int i = 0; i < 15; ++i) {
    double fx = f(c + h * kXgk[i]);
    kron += kWgk[i] * fx;
    if (i % 2 == 1) gauss += kWg[i / 2] * fx;
  }
  kron *= h;
  gauss *= h;
  double err = std::abs(kron - gauss);
  // standard QUADPACK-style sharpening of the raw difference
  err = err * std::min(1.0, std::pow(200.0 * err / (std::abs(kron) + 1e-300), 1.5));
  return {a, b, kron, err};
}

}  // namespace

QuadratureResult integrate_gk(const std::function<double(double)>& f, double a, double b,
                              double rel_tol, double abs_tol, int max_intervals) {
  return integrate_gk_split(f, a, b, {}, rel_tol, abs_tol);
}

QuadratureResult integrate_gk_split(const std::function<double(double)>& f, double a, double b,
                                    const std::vector<double>& breaks, double rel_tol,
                                    double abs_tol) {
  std::priority_queue<Interval> q;
  std::vector<double> pts{a};
  for (double p : breaks)
    if (p > a && p < b) pts.push_back(p);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());

  double total = 0, toterr = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    Interval iv = eval_gk(f, pts[i], pts[i + 1]);
    total += iv.value;
    toterr += iv.error;
    q.push(iv);
  }

  int budget = 4000;
  while (toterr > std::max(abs_tol, rel_tol * std::abs(total)) && budget-- > 0) {
    Interval worst = q.top();
    q.pop();
    if (worst.b - worst.a < 1e-15 * (b - a)) {  // cannot refine further
      q.push(worst);
      break;
    }
    double mid = 0.5 * (worst.a + worst.b);
    Interval l = eval_gk(f, worst.a, mid);
    Interval r = eval_gk(f, mid, worst.b);
    total += l.value + r.value - worst.value;
    toterr += l.error + r.error - worst.error;
    q.push(l);
    q.push(r);
  }
  return {total, toterr};
}

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw RuntimeFailure("pchip: need >= 2 matching nodes");
  d_.assign(n, 0.0);
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    if (h[i] <= 0) throw RuntimeFailure("pchip: grid not strictly increasing");
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0) {
      d_[i] = 0;
    } else {
      double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0) return 0.0;
    if (d0 * d1 < 0 && std::abs(d) > 3 * std::abs(d0)) return 3 * d0;
    return d;
  };
  d_[0] = (n == 2) ? delta[0] : end_slope(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = (n == 2) ? delta[0] : end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

std::size_t Pchip::find_interval(double xq) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), xq);
  std::size_t i = static_cast<std::size_t>(it - x_.begin());
  if (i == 0) return 0;
  if (i >= x_.size()) return x_.size() - 2;
  return i - 1;
}

double Pchip::operator()(double xq) const {
  std::size_t i = find_interval(xq);
  double h = x_[i + 1] - x_[i], t = (xq - x_[i]) / h;
  double t2 = t * t, t3 = t2 * t;
  double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

double Pchip::derivative(double xq) const {
  std::size_t i = find_interval(xq);
  double h = x_[i + 1] - x_[i], t = (xq - x_[i]) / h;
  double t2 = t * t;
  double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
  double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
  return g00 * y_[i] + g10 * d_[i] + g01 * y_[i + 1] + g11 * d_[i + 1];
}

}  // namespace msad
