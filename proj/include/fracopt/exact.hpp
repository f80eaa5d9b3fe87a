#pragma once

// Closed-form benchmark solutions on the unit disc.
//
// The family
//   u_{n,l}(r,t) = r^l cos(l t) P_n^{(s,l)}(2 r^2 - 1) (1 - r^2)_+^s
// solves (-Delta)^s u = f_{n,l} with
//   f_{n,l}(r,t) = 2^{2s} Gamma(1+s)^2 binom(s+n+l, n+l) binom(s+n, n)
//                  r^l cos(l t) P_n^{(s,l)}(2 r^2 - 1),
// from which an optimal control triple with known active set is assembled.

#include "fracopt/mesh.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace fracopt {

// Jacobi polynomial P_n^{(a,b)}(x) by the standard three-term recurrence.
inline double jacobi(int n, double a, double b, double x) {
  if (n < 0) throw std::invalid_argument("jacobi: n must be >= 0");
  double p0 = 1.0;
  if (n == 0) return p0;
  double p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
  for (int k = 2; k <= n; ++k) {
    const double c1 = 2.0 * k * (k + a + b) * (2.0 * k + a + b - 2.0);
    const double c2 = (2.0 * k + a + b - 1.0) *
                      ((2.0 * k + a + b) * (2.0 * k + a + b - 2.0) * x + a * a - b * b);
    const double c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * (2.0 * k + a + b);
    const double p2 = (c2 * p1 - c3 * p0) / c1;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Generalized binomial coefficient Gamma(t+1) / (Gamma(k+1) Gamma(t-k+1)).
inline double gen_binomial(double top, double k) {
  const double args[3] = {top + 1.0, k + 1.0, top - k + 1.0};
  for (double a : args)
    if (a <= 0.0 && a == std::floor(a))
      throw std::invalid_argument("gen_binomial: gamma pole");
  return std::exp(std::lgamma(args[0]) - std::lgamma(args[1]) - std::lgamma(args[2]));
}

inline double u_exact(int n, int l, double s, const Vec2& x) {
  const double r2 = x.squaredNorm();
  if (r2 >= 1.0) return 0.0;
  const double r = std::sqrt(r2);
  const double theta = std::atan2(x.y(), x.x());
  return std::pow(r, l) * std::cos(l * theta) * jacobi(n, s, static_cast<double>(l), 2.0 * r2 - 1.0) *
         std::pow(1.0 - r2, s);
}

inline double f_exact(int n, int l, double s, const Vec2& x) {
  const double r2 = x.squaredNorm();
  const double r = std::sqrt(r2);
  const double theta = std::atan2(x.y(), x.x());
  const double c = std::pow(2.0, 2.0 * s) * std::exp(2.0 * std::lgamma(1.0 + s)) *
                   gen_binomial(s + n + l, static_cast<double>(n + l)) *
                   gen_binomial(s + n, static_cast<double>(n));
  return c * std::pow(r, l) * std::cos(l * theta) * jacobi(n, s, static_cast<double>(l), 2.0 * r2 - 1.0);
}

// Exact optimal triple on the unit disc:
//   ubar = u_{0,1},  pbar = -alpha u_{0,0},  zbar = clamp(u_{0,0}, a, b),
//   f    = f_{0,1} - zbar,  u_d = u_{0,1} + alpha f_{0,0}.
// The upper bound is active on the disc r < r_o = sqrt(1 - b^{1/s}).
struct DiscBenchmark {
  double s = 0.5;
  double alpha = 0.1;
  double a = -0.9;
  double b = 0.9;
  double r_o = 0.0;

  [[nodiscard]] double u(const Vec2& x) const { return u_exact(0, 1, s, x); }
  [[nodiscard]] double p(const Vec2& x) const { return -alpha * u_exact(0, 0, s, x); }
  [[nodiscard]] double z(const Vec2& x) const {
    return std::min(b, std::max(a, u_exact(0, 0, s, x)));
  }
  [[nodiscard]] double f(const Vec2& x) const { return f_exact(0, 1, s, x) - z(x); }
  [[nodiscard]] double u_d(const Vec2& x) const {
    return u_exact(0, 1, s, x) + alpha * f_exact(0, 0, s, x);
  }

  // <f + zbar, ubar> = <f_{0,1}, u_{0,1}> = 2^{2s} Gamma(1+s)^2 pi / (2 (s+2)),
  // the analytic leading term of the energy-error identity.
  [[nodiscard]] double energy_pairing() const {
    return std::pow(2.0, 2.0 * s) * std::exp(2.0 * std::lgamma(1.0 + s)) * std::numbers::pi /
           (2.0 * (s + 2.0));
  }
};

inline DiscBenchmark benchmark_5_1(double s, double alpha, double a, double b) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("benchmark_5_1: s must be in (0,1)");
  if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("benchmark_5_1: b must be in (0,1)");
  if (!(a <= 0.0)) throw std::invalid_argument("benchmark_5_1: a must be <= 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("benchmark_5_1: alpha must be > 0");
  DiscBenchmark bm;
  bm.s = s;
  bm.alpha = alpha;
  bm.a = a;
  bm.b = b;
  bm.r_o = std::sqrt(1.0 - std::pow(b, 1.0 / s));
  return bm;
}

}  // namespace fracopt
