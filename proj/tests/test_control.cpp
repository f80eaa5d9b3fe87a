#include "fracopt/control.hpp"

#include "fracopt/exact.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace fracopt;

TEST_CASE("box projection", "[control]") {
  CHECK(proj_box(0.5, -0.9, 0.9) == 0.5);
  CHECK(proj_box(2.0, -0.9, 0.9) == 0.9);
  CHECK(proj_box(-3.0, -0.9, 0.9) == -0.9);
}

TEST_CASE("piecewise-constant projection", "[control]") {
  const Mesh m = build_disc_mesh({0.4, 1.0});

  const Eigen::VectorXd zc = l2_project_pw_constant(m, [](const Vec2&) { return 2.5; });
  for (int t = 0; t < m.n_elements(); ++t) CHECK(zc[t] == Catch::Approx(2.5).epsilon(1e-13));

  // affine g: element value equals the barycenter value
  const Eigen::VectorXd zx = l2_project_pw_constant(m, [](const Vec2& x) { return x.x(); });
  for (int t = 0; t < m.n_elements(); ++t)
    CHECK(zx[t] == Catch::Approx(m.barycenter(t).x()).margin(1e-13));

  // hat function restricted to an element containing its vertex averages to 1/3
  int v = m.interior_vertices[0];
  StateField hat{Eigen::VectorXd::Zero(m.n_interior())};
  hat.coeffs[m.dof_of_vertex[v]] = 1.0;
  const Eigen::VectorXd zh = l2_project_pw_constant(m, hat);
  for (int t = 0; t < m.n_elements(); ++t) {
    int count = 0;
    for (int k = 0; k < 3; ++k) count += (m.triangles[t][k] == v);
    if (count == 1) CHECK(zh[t] == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
  }
}

namespace {

OcpProblem zero_data_problem(double s, double alpha) {
  OcpProblem pb;
  pb.s = s;
  pb.alpha = alpha;
  pb.a = -1.0;
  pb.b = 1.0;
  pb.f = [](const Vec2&) { return 0.0; };
  pb.u_d = [](const Vec2&) { return 0.0; };
  return pb;
}

}  // namespace

TEST_CASE("zero-data limit: gradient reduces to alpha z", "[control]") {
  const Mesh m = build_disc_mesh({0.5, 1.0});
  const DiscreteOcp sys = assemble_ocp(zero_data_problem(0.5, 50.0), m);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Eigen::VectorXd z(m.n_elements());
  for (int t = 0; t < m.n_elements(); ++t) z[t] = U(rng);
  const Eigen::VectorXd g = reduced_gradient(sys, z);
  // state and adjoint scale with z but alpha dominates by construction
  CHECK((g - 50.0 * z).norm() <= 1e-2 * (50.0 * z).norm());
}

TEST_CASE("reduced gradient matches central finite differences of j", "[control]") {
  const Mesh m = build_disc_mesh({0.45, 1.0});
  for (double s : {0.3, 0.5, 0.7}) {
    const DiscBenchmark bench = benchmark_5_1(s, 0.1, -0.9, 0.9);
    OcpProblem pb;
    pb.s = s;
    pb.alpha = 0.1;
    pb.a = -0.9;
    pb.b = 0.9;
    pb.f = [bench](const Vec2& x) { return bench.f(x); };
    pb.u_d = [bench](const Vec2& x) { return bench.u_d(x); };
    const DiscreteOcp sys = assemble_ocp(pb, m);

    auto j_of = [&](const Eigen::VectorXd& z) {
      const Eigen::VectorXd u = sys.solve_state(sys.B * z);
      return 0.5 * sys.misfit_sq(u) + 0.5 * pb.alpha * z.cwiseAbs2().dot(sys.areas);
    };

    std::mt19937_64 rng(31 + static_cast<unsigned>(10 * s));
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    Eigen::VectorXd z(m.n_elements()), dir(m.n_elements());
    for (int t = 0; t < m.n_elements(); ++t) {
      z[t] = U(rng);
      dir[t] = U(rng);
    }
    const Eigen::VectorXd g = reduced_gradient(sys, z);
    const double eps = 1e-5;
    const double fd = (j_of(z + eps * dir) - j_of(z - eps * dir)) / (2.0 * eps);
    const double directional = g.cwiseProduct(dir).dot(sys.areas);
    CHECK(directional == Catch::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("uncontrolled target gives a vanishing optimal control", "[control]") {
  const Mesh m = build_disc_mesh({0.4, 1.0});
  OcpProblem pb;
  pb.s = 0.5;
  pb.alpha = 0.1;
  pb.a = -1.0;
  pb.b = 1.0;
  pb.f = [](const Vec2& x) { return 1.0 + x.x(); };
  pb.u_d = [](const Vec2&) { return 0.0; };  // replaced below by the uncontrolled state
  DiscreteOcp sys = assemble_ocp(pb, m);
  const Eigen::VectorXd u0 = sys.solve_state(Eigen::VectorXd::Zero(m.n_interior()));
  const PointLocator loc(m);
  sys.problem.u_d = [&, u0](const Vec2& x) {
    const int t = loc.locate(x);
    return t >= 0 ? p1_value(m, u0, t, x) : 0.0;
  };
  sys.load_ud = assemble_load(m, sys.problem.u_d, sys.problem.load_order);

  const OcpSolution sol = solve_fully_discrete(sys);
  CHECK(sol.control.values.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.j_value < 1e-10);
}

TEST_CASE("degenerate box pins the control near the midpoint", "[control]") {
  const Mesh m = build_disc_mesh({0.5, 1.0});
  OcpProblem pb = zero_data_problem(0.5, 0.1);
  const double eps = 1e-3;
  pb.a = 0.4 - eps;
  pb.b = 0.4;
  pb.f = [](const Vec2&) { return 1.0; };
  pb.u_d = [](const Vec2&) { return 0.5; };
  const OcpSolution sol = solve_fully_discrete(pb, m);
  for (int t = 0; t < m.n_elements(); ++t)
    CHECK(std::abs(sol.control.values[t] - (pb.a + pb.b) / 2.0) <= eps);
}

TEST_CASE("fully discrete solve satisfies feasibility, projection identity, descent",
          "[control]") {
  const Mesh m = build_disc_mesh({0.35, 1.0});
  const DiscBenchmark bench = benchmark_5_1(0.7, 0.1, -0.9, 0.9);
  OcpProblem pb;
  pb.s = 0.7;
  pb.alpha = 0.1;
  pb.a = -0.9;
  pb.b = 0.9;
  pb.f = [bench](const Vec2& x) { return bench.f(x); };
  pb.u_d = [bench](const Vec2& x) { return bench.u_d(x); };
  const DiscreteOcp sys = assemble_ocp(pb, m);

  std::vector<double> j_trace;
  const OcpSolution sol = solve_fully_discrete(
      sys, [&](int, double j, double) { j_trace.push_back(j); });

  CHECK(sol.final_stationarity <= pb.opt_tol);
  // feasibility is exact
  for (int t = 0; t < m.n_elements(); ++t) {
    CHECK(sol.control.values[t] >= pb.a);
    CHECK(sol.control.values[t] <= pb.b);
  }
  // monotone descent across accepted iterations
  for (std::size_t k = 1; k < j_trace.size(); ++k) CHECK(j_trace[k] <= j_trace[k - 1] + 1e-14);
  // elementwise projection identity at convergence
  const Eigen::VectorXd avg_p = (sys.B.transpose() * sol.adjoint.coeffs).cwiseQuotient(sys.areas);
  for (int t = 0; t < m.n_elements(); ++t)
    CHECK(sol.control.values[t] ==
          Catch::Approx(proj_box(-avg_p[t] / pb.alpha, pb.a, pb.b)).margin(1e-6));
  // the active set near the center hits the upper bound
  for (int t = 0; t < m.n_elements(); ++t)
    if (m.barycenter(t).norm() < 0.8 * bench.r_o)
      CHECK(sol.control.values[t] == Catch::Approx(0.9).margin(0.15));
}

TEST_CASE("max_iter exceeded carries the last iterate", "[control]") {
  const Mesh m = build_disc_mesh({0.5, 1.0});
  const DiscBenchmark bench = benchmark_5_1(0.5, 0.1, -0.9, 0.9);
  OcpProblem pb;
  pb.s = 0.5;
  pb.alpha = 0.1;
  pb.a = -0.9;
  pb.b = 0.9;
  pb.f = [bench](const Vec2& x) { return bench.f(x); };
  pb.u_d = [bench](const Vec2& x) { return bench.u_d(x); };
  pb.max_iter = 1;
  pb.opt_tol = 1e-14;
  try {
    solve_fully_discrete(pb, m);
    FAIL("expected OptimizationError");
  } catch (const OptimizationError& e) {
    CHECK(e.last_iterate.final_stationarity > 0.0);
    CHECK(e.last_iterate.control.values.size() == m.n_elements());
  }
}

TEST_CASE("variational scheme: strong regularization drives the control to zero", "[control]") {
  const Mesh m = build_disc_mesh({0.45, 1.0});
  OcpProblem pb;
  pb.s = 0.5;
  pb.alpha = 1e6;
  pb.a = -0.9;
  pb.b = 0.9;
  pb.f = [](const Vec2&) { return 1.0; };
  pb.u_d = [](const Vec2&) { return 0.3; };
  const OcpSolution sol = solve_variational(pb, m);
  CHECK(sol.semidiscrete);
  for (int t = 0; t < m.n_elements(); ++t)
    CHECK(std::abs(sol.control_at(m, t, m.barycenter(t))) < 1e-5);
}

TEST_CASE("both schemes match the dense KKT oracle when bounds are inactive", "[control]") {
  const Mesh m = build_disc_mesh({0.4, 1.0});
  REQUIRE(m.n_interior() <= 300);
  const double s = 0.6, alpha = 0.1;
  const double big = 1e9;  // bounds disabled
  const DiscBenchmark bench = benchmark_5_1(s, alpha, -0.9, 0.9);
  OcpProblem pb;
  pb.s = s;
  pb.alpha = alpha;
  pb.a = -big;
  pb.b = big;
  pb.f = [bench](const Vec2& x) { return bench.f(x); };
  pb.u_d = [bench](const Vec2& x) { return bench.u_d(x); };
  pb.opt_tol = 1e-11;
  pb.max_iter = 5000;
  const DiscreteOcp sys = assemble_ocp(pb, m);
  const int N = m.n_interior(), ne = m.n_elements();

  // fully discrete KKT: unknowns (u, p, z)
  {
    const Eigen::MatrixXd Ad = sys.A.entries;
    const Eigen::MatrixXd Md(sys.M), Bd(sys.B);
    const int n_tot = 2 * N + ne;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n_tot, n_tot);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_tot);
    K.block(0, 0, N, N) = Ad;                                   // A u - B z = F
    K.block(0, 2 * N, N, ne) = -Bd;
    rhs.segment(0, N) = sys.load_f;
    K.block(N, 0, N, N) = -Md;                                  // A p - M u = -D
    K.block(N, N, N, N) = Ad;
    rhs.segment(N, N) = -sys.load_ud;
    K.block(2 * N, N, ne, N) = Bd.transpose();                  // B^T p + alpha |K| z = 0
    K.block(2 * N, 2 * N, ne, ne) =
        (alpha * sys.areas).asDiagonal().toDenseMatrix();
    const Eigen::VectorXd sol_kkt = K.partialPivLu().solve(rhs);

    const OcpSolution sol = solve_fully_discrete(sys);
    CHECK((sol.state.coeffs - sol_kkt.segment(0, N)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((sol.adjoint.coeffs - sol_kkt.segment(N, N)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((sol.control.values - sol_kkt.segment(2 * N, ne)).cwiseAbs().maxCoeff() < 1e-8);
  }

  // variational KKT: control eliminated, g = -p/alpha
  {
    const Eigen::MatrixXd Ad = sys.A.entries;
    const Eigen::MatrixXd Md(sys.M);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * N, 2 * N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * N);
    K.block(0, 0, N, N) = Ad;                      // A u + (1/alpha) M p = F
    K.block(0, N, N, N) = Md / alpha;
    rhs.segment(0, N) = sys.load_f;
    K.block(N, 0, N, N) = -Md;                     // A p - M u = -D
    K.block(N, N, N, N) = Ad;
    rhs.segment(N, N) = -sys.load_ud;
    const Eigen::VectorXd sol_kkt = K.partialPivLu().solve(rhs);

    const OcpSolution sol = solve_variational(sys);
    CHECK((sol.state.coeffs - sol_kkt.segment(0, N)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((sol.adjoint.coeffs - sol_kkt.segment(N, N)).cwiseAbs().maxCoeff() < 1e-8);
  }
}
