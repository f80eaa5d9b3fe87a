#include "fracopt/exact.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace fracopt;

TEST_CASE("jacobi polynomial base cases and frozen value", "[exact]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double a = 0.5 + U(rng), b = 0.5 + U(rng), x = U(rng);
    CHECK(jacobi(0, a, b, x) == 1.0);
    CHECK(jacobi(1, a, b, x) ==
          Catch::Approx((a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0).epsilon(1e-13));
  }
  // external arbitrary-precision evaluation of P_3^{(0.6, 2)}(0.3)
  CHECK(jacobi(3, 0.6, 2.0, 0.3) == Catch::Approx(-0.3370610).epsilon(1e-12));
  CHECK_THROWS_AS(jacobi(-1, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("generalized binomial coefficients", "[exact]") {
  CHECK(gen_binomial(0.5, 0.5) == Catch::Approx(1.0).epsilon(1e-13));
  CHECK(gen_binomial(5.0, 2.0) == Catch::Approx(10.0).epsilon(1e-13));
  // Gamma(2.5) / (Gamma(1.5) Gamma(2)) = 1.5
  CHECK(gen_binomial(1.5, 0.5) == Catch::Approx(1.5).epsilon(1e-13));
  CHECK_THROWS_AS(gen_binomial(-1.0, 0.5), std::invalid_argument);
}

TEST_CASE("f_{0,0} is the constant 2^(2s) Gamma(1+s)^2", "[exact]") {
  const double s = 0.5;
  const Vec2 pts[3] = {{0.0, 0.0}, {0.3, -0.4}, {0.9, 0.1}};
  for (const auto& x : pts)
    CHECK(f_exact(0, 0, s, x) == Catch::Approx(std::numbers::pi / 2.0).epsilon(1e-13));
  // consistency with the closed-form solution for f = 1:
  // u = Gamma(1) / (2^{2s} Gamma(1+s)^2) (1-r^2)^s  =>  coeff * f_{0,0} = 1
  for (double sv : {0.25, 0.5, 0.75}) {
    const double coeff = 1.0 / (std::pow(2.0, 2.0 * sv) * std::exp(2.0 * std::lgamma(1.0 + sv)));
    CHECK(coeff * f_exact(0, 0, sv, Vec2(0.2, 0.1)) == Catch::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("u_{n,l} vanishes on and outside the unit circle", "[exact]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 2.0 * std::numbers::pi);
  for (int rep = 0; rep < 50; ++rep) {
    const double th = U(rng);
    // on the circle, cos^2 + sin^2 lands within an ulp of 1; the (1-r^2)_+^s
    // factor then contributes at most ulp^s
    CHECK(std::abs(u_exact(0, 1, 0.7, Vec2(std::cos(th), std::sin(th)))) < 1e-9);
    const double r = 1.0 + 0.5 * U(rng);
    CHECK(u_exact(1, 2, 0.3, Vec2(r * std::cos(th), r * std::sin(th))) == 0.0);
  }
}

TEST_CASE("benchmark active-set radius and center values", "[exact]") {
  const DiscBenchmark bm = benchmark_5_1(0.7, 0.1, -0.9, 0.9);
  CHECK(bm.r_o == Catch::Approx(0.37381170835654372).epsilon(1e-14));
  // upper bound active at the center
  CHECK(bm.z(Vec2(0.0, 0.0)) == 0.9);
  CHECK(bm.p(Vec2(0.0, 0.0)) == Catch::Approx(-0.1).epsilon(1e-14));
  CHECK_THROWS_AS(benchmark_5_1(0.7, 0.1, -0.9, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(benchmark_5_1(0.7, 0.1, 0.2, 0.9), std::invalid_argument);
}

TEST_CASE("pointwise projection identity of the benchmark", "[exact]") {
  const DiscBenchmark bm = benchmark_5_1(0.6, 0.1, -0.9, 0.9);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int tested = 0;
  while (tested < 10000) {
    const Vec2 x(U(rng), U(rng));
    if (x.norm() >= 1.0) continue;
    ++tested;
    const double lhs = bm.z(x);
    const double rhs = std::min(bm.b, std::max(bm.a, -bm.p(x) / bm.alpha));
    // -p/alpha = (alpha u00)/alpha reproduces u00 up to one rounding
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-15).margin(1e-300));
  }
}

TEST_CASE("analytic energy pairing matches direct quadrature", "[exact]") {
  // <f_{0,1}, u_{0,1}> = 2^{2s} Gamma(1+s)^2 pi / (2 (s+2)); frozen value for s=0.7
  const DiscBenchmark bm = benchmark_5_1(0.7, 0.1, -0.9, 0.9);
  CHECK(bm.energy_pairing() == Catch::Approx(1.2675952356257641).epsilon(1e-14));
}
