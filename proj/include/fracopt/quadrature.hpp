#pragma once

// Gauss-type quadrature rules built through the Golub-Welsch eigenvalue
// procedure: Gauss-Legendre, Gauss-Jacobi with weight x^a (1-x)^b on [0,1],
// and conical-product rules on the reference triangle
//   That = { (u,v) : u >= 0, v >= 0, u + v <= 1 }.
// A rule with n points per direction integrates polynomials of degree
// 2n-1 exactly (per direction).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fracopt {

struct Rule1d {
  std::vector<double> x;
  std::vector<double> w;
  [[nodiscard]] std::size_t size() const { return x.size(); }
};

// Nodes/weights approximating  int_0^1 x^a (1-x)^b f(x) dx.
// a, b > -1. a = b = 0 gives Gauss-Legendre on [0,1].
inline Rule1d gauss_jacobi_01(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_jacobi_01: n must be >= 1");
  if (a <= -1.0 || b <= -1.0)
    throw std::invalid_argument("gauss_jacobi_01: weight exponents must be > -1");

  // Recurrence coefficients of monic Jacobi polynomials for the weight
  // (1-t)^A (1+t)^B on [-1,1], with A = b, B = a after mapping t = 2x-1.
  const double A = b, B = a;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  J(0, 0) = (B - A) / (A + B + 2.0);
  for (int k = 1; k < n; ++k) {
    const double q = 2.0 * k + A + B;
    J(k, k) = (B * B - A * A) / (q * (q + 2.0));
    double beta;
    if (k == 1) {
      beta = 4.0 * (A + 1.0) * (B + 1.0) / ((A + B + 2.0) * (A + B + 2.0) * (A + B + 3.0));
    } else {
      beta = 4.0 * k * (k + A) * (k + B) * (k + A + B) / (q * q * (q + 1.0) * (q - 1.0));
    }
    const double sb = std::sqrt(beta);
    J(k, k - 1) = sb;
    J(k - 1, k) = sb;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("gauss_jacobi_01: eigen decomposition failed");

  const double mu0 = std::pow(2.0, A + B + 1.0) *
                     std::exp(std::lgamma(A + 1.0) + std::lgamma(B + 1.0) - std::lgamma(A + B + 2.0));
  const double scale = std::pow(2.0, -(a + b + 1.0));

  Rule1d r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    r.x[i] = 0.5 * (es.eigenvalues()(i) + 1.0);
    const double v0 = es.eigenvectors()(0, i);
    r.w[i] = mu0 * v0 * v0 * scale;
  }
  return r;
}

inline Rule1d gauss_legendre_01(int n) { return gauss_jacobi_01(n, 0.0, 0.0); }

struct TriPoint {
  double u, v, w;  // barycentric-style reference coordinates + weight
};

struct TriRule {
  std::vector<TriPoint> pts;  // weights sum to area(That) = 1/2
  [[nodiscard]] std::size_t size() const { return pts.size(); }
};

// Conical product rule: u from the Jacobi weight (1-u), v = t(1-u) with t
// Gauss-Legendre. n^2 points, exact for total degree 2n-1.
inline TriRule triangle_rule(int n) {
  const Rule1d ru = gauss_jacobi_01(n, 0.0, 1.0);
  const Rule1d rv = gauss_legendre_01(n);
  TriRule tr;
  tr.pts.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      tr.pts.push_back({ru.x[i], rv.x[j] * (1.0 - ru.x[i]), ru.w[i] * rv.w[j]});
  return tr;
}

}  // namespace fracopt
