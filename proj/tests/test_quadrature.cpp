#include "fracopt/quadrature.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace fracopt;

TEST_CASE("Gauss-Legendre integrates polynomials exactly", "[quadrature]") {
  const Rule1d r = gauss_legendre_01(4);
  double sum = 0.0, x7 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    sum += r.w[i];
    x7 += r.w[i] * std::pow(r.x[i], 7);
  }
  CHECK(sum == Catch::Approx(1.0).epsilon(1e-14));
  CHECK(x7 == Catch::Approx(1.0 / 8.0).epsilon(1e-13));  // degree 2n-1 = 7
}

TEST_CASE("Gauss-Jacobi handles fractional endpoint weights", "[quadrature]") {
  // int_0^1 x^a (1-x)^b x^k dx = B(a+k+1, b+1)
  const double a = 0.35, b = 1.6;
  const Rule1d r = gauss_jacobi_01(6, a, b);
  for (int k = 0; k <= 5; ++k) {
    double v = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) v += r.w[i] * std::pow(r.x[i], k);
    const double exact = std::exp(std::lgamma(a + k + 1.0) + std::lgamma(b + 1.0) -
                                  std::lgamma(a + b + k + 2.0));
    CHECK(v == Catch::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("Gauss-Jacobi rejects invalid input", "[quadrature]") {
  CHECK_THROWS_AS(gauss_jacobi_01(0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gauss_jacobi_01(3, -1.0, 0.0), std::invalid_argument);
}

TEST_CASE("triangle rule integrates bivariate monomials", "[quadrature]") {
  // int_That u^p v^q = p! q! / (p+q+2)!
  auto exact = [](int p, int q) {
    return std::exp(std::lgamma(p + 1.0) + std::lgamma(q + 1.0) - std::lgamma(p + q + 3.0));
  };
  const TriRule tr = triangle_rule(5);
  for (int p = 0; p <= 4; ++p)
    for (int q = 0; q + p <= 4; ++q) {
      double v = 0.0;
      for (const auto& pt : tr.pts) v += pt.w * std::pow(pt.u, p) * std::pow(pt.v, q);
      CHECK(v == Catch::Approx(exact(p, q)).epsilon(1e-12));
    }
}
