#pragma once

// The box-constrained optimal control problem
//   min 1/2 ||u - u_d||^2 + alpha/2 ||z||^2   s.t.   A(u,v) = <f + z, v>,
//   a <= z <= b,
// in two discretizations sharing the P1 state space:
//   * fully discrete: piecewise-constant control unknowns, solved by a
//     projected Barzilai-Borwein gradient method with backtracking;
//   * variational: the control is not discretized; the optimal control is the
//     implicit function clamp(-p/alpha) of the discrete adjoint, computed by
//     damped fixed-point iteration on the adjoint.

#include "fracopt/assembly.hpp"
#include "fracopt/mesh.hpp"
#include "fracopt/solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>

namespace fracopt {

inline double proj_box(double v, double a, double b) { return std::min(b, std::max(a, v)); }

struct OcpProblem {
  double s = 0.5;
  double alpha = 0.1;
  double a = -0.9;
  double b = 0.9;
  std::function<double(const Vec2&)> f;
  std::function<double(const Vec2&)> u_d;
  double opt_tol = 1e-8;
  int max_iter = 500;
  int load_order = 6;      // quadrature order for f, u_d, and the clipped-adjoint control load
  int load_subdivide = 0;  // uniform quadrature-cell refinement for discontinuous data

  void validate() const {
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("OcpProblem: s must be in (0,1)");
    if (!(alpha > 0.0)) throw std::invalid_argument("OcpProblem: alpha must be > 0");
    if (!(a < b)) throw std::invalid_argument("OcpProblem: need a < b");
    if (!f || !u_d) throw std::invalid_argument("OcpProblem: f and u_d must be set");
  }
};

// Per-element constants with box bounds.
struct ControlField {
  Eigen::VectorXd values;
  double a = 0.0, b = 0.0;
};

// element averages of a callable: value on K is (1/|K|) int_K g
inline Eigen::VectorXd l2_project_pw_constant(const Mesh& mesh,
                                              const std::function<double(const Vec2&)>& g,
                                              int quad_order = 4) {
  const TriRule rule = triangle_rule(quad_order);
  Eigen::VectorXd z(mesh.n_elements());
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    double v = 0.0;
    for (const auto& q : rule.pts) v += q.w * g(a + q.u * (b - a) + q.v * (c - a));
    z[t] = 2.0 * v;  // rule weights sum to 1/2, so this is the element mean
  }
  return z;
}

// exact element averages of a P1 field (mean of the three vertex values)
inline Eigen::VectorXd l2_project_pw_constant(const Mesh& mesh, const StateField& g) {
  Eigen::VectorXd z(mesh.n_elements());
  for (int t = 0; t < mesh.n_elements(); ++t) {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int d = mesh.dof_of_vertex[mesh.triangles[t][k]];
      if (d >= 0) v += g.coeffs[d];
    }
    z[t] = v / 3.0;
  }
  return z;
}

// Assembled discrete problem: stiffness, mass, P1-P0 coupling, data loads,
// and a cached factorization for the repeated state/adjoint solves.
struct DiscreteOcp {
  const Mesh* mesh = nullptr;
  OcpProblem problem;
  StiffnessMatrix A;
  Eigen::SparseMatrix<double> M;  // interior x interior P1 mass
  Eigen::SparseMatrix<double> B;  // interior x elements, B_{iK} = |K|/3
  Eigen::VectorXd load_f;
  Eigen::VectorXd load_ud;
  Eigen::VectorXd areas;
  std::shared_ptr<FactorizedOperator> op;

  [[nodiscard]] Eigen::VectorXd solve_state(const Eigen::VectorXd& control_load) const {
    return op->solve(load_f + control_load);
  }
  [[nodiscard]] Eigen::VectorXd solve_adjoint(const Eigen::VectorXd& u) const {
    return op->solve(M * u - load_ud);
  }
  // squared L2 distance between the P1 field u and the callable u_d
  [[nodiscard]] double misfit_sq(const Eigen::VectorXd& u) const {
    const TriRule rule = triangle_rule(problem.load_order);
    double total = 0.0;
    for (int t = 0; t < mesh->n_elements(); ++t) {
      const auto& tri = mesh->triangles[t];
      const Vec2 &a = mesh->vertices[tri[0]], &b = mesh->vertices[tri[1]],
                 &c = mesh->vertices[tri[2]];
      double uloc[3];
      for (int k = 0; k < 3; ++k) {
        const int d = mesh->dof_of_vertex[tri[k]];
        uloc[k] = d >= 0 ? u[d] : 0.0;
      }
      const double J = 2.0 * mesh->elem_area[t];
      for (const auto& q : rule.pts) {
        const Vec2 x = a + q.u * (b - a) + q.v * (c - a);
        const double uh = (1.0 - q.u - q.v) * uloc[0] + q.u * uloc[1] + q.v * uloc[2];
        const double e = uh - problem.u_d(x);
        total += J * q.w * e * e;
      }
    }
    return total;
  }
};

inline DiscreteOcp assemble_ocp(const OcpProblem& problem, const Mesh& mesh,
                                const QuadratureSpec& quad = {}, const AssemblyOptions& opts = {}) {
  problem.validate();
  DiscreteOcp sys;
  sys.mesh = &mesh;
  sys.problem = problem;
  sys.A = assemble_stiffness(mesh, problem.s, quad, opts);
  sys.M = assemble_mass(mesh);
  sys.B = assemble_coupling(mesh);
  sys.load_f = assemble_load(mesh, problem.f, problem.load_order, problem.load_subdivide);
  sys.load_ud = assemble_load(mesh, problem.u_d, problem.load_order, problem.load_subdivide);
  sys.areas = Eigen::Map<const Eigen::VectorXd>(mesh.elem_area.data(), mesh.n_elements());
  sys.op = std::make_shared<FactorizedOperator>(sys.A.entries);
  return sys;
}

// Element-averaged representation of j'(z) = p(z) + alpha z.
inline Eigen::VectorXd reduced_gradient(const DiscreteOcp& sys, const Eigen::VectorXd& z) {
  const Eigen::VectorXd u = sys.solve_state(sys.B * z);
  const Eigen::VectorXd p = sys.solve_adjoint(u);
  return (sys.B.transpose() * p).cwiseQuotient(sys.areas) + sys.problem.alpha * z;
}

struct OcpSolution {
  StateField state;    // ubar
  StateField adjoint;  // pbar
  ControlField control;
  bool semidiscrete = false;  // control is clamp(-p/alpha), control.values are its averages
  double alpha = 0.0;
  int iterations = 0;
  double final_stationarity = 0.0;
  double j_value = 0.0;

  // pointwise control value on element t
  [[nodiscard]] double control_at(const Mesh& mesh, int t, const Vec2& x) const {
    if (!semidiscrete) return control.values[t];
    return proj_box(-p1_value(mesh, adjoint.coeffs, t, x) / alpha, control.a, control.b);
  }
};

struct OptimizationError : std::runtime_error {
  OptimizationError(const std::string& what, OcpSolution last)
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  OcpSolution last_iterate;
};

// iteration hook: (iteration, j, stationarity)
using OptimizerTrace = std::function<void(int, double, double)>;

namespace detail {

inline double weighted_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& areas) {
  return std::sqrt(v.cwiseAbs2().dot(areas));
}

}  // namespace detail

// Fully discrete scheme: piecewise-constant control, projected BB gradient
// with monotone backtracking. Stops when the fixed point residual of the
// projection formula, ||z - proj(-avg_K p / alpha)||_L2, drops below opt_tol.
inline OcpSolution solve_fully_discrete(const DiscreteOcp& sys,
                                        const OptimizerTrace& trace = nullptr) {
  const OcpProblem& pb = sys.problem;
  const double alpha = pb.alpha;
  const int ne = sys.mesh->n_elements();

  auto clamp_vec = [&](Eigen::VectorXd v) {
    for (int i = 0; i < v.size(); ++i) v[i] = proj_box(v[i], pb.a, pb.b);
    return v;
  };

  Eigen::VectorXd z = clamp_vec(Eigen::VectorXd::Zero(ne));
  Eigen::VectorXd u = sys.solve_state(sys.B * z);
  Eigen::VectorXd p = sys.solve_adjoint(u);
  auto cost = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& uu) {
    return 0.5 * sys.misfit_sq(uu) + 0.5 * alpha * zz.cwiseAbs2().dot(sys.areas);
  };
  double j = cost(z, u);
  Eigen::VectorXd g = (sys.B.transpose() * p).cwiseQuotient(sys.areas) + alpha * z;

  auto stationarity = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& pp) {
    const Eigen::VectorXd avg_p = (sys.B.transpose() * pp).cwiseQuotient(sys.areas);
    return detail::weighted_norm(zz - clamp_vec(-avg_p / alpha), sys.areas);
  };

  double tau = 1.0 / alpha;
  double st = stationarity(z, p);
  int it = 0;
  if (trace) trace(it, j, st);

  while (st > pb.opt_tol) {
    if (++it > pb.max_iter) {
      OcpSolution last{StateField{u}, StateField{p},
                       ControlField{z, pb.a, pb.b}, false, alpha, it - 1, st, j};
      throw OptimizationError("solve_fully_discrete: max_iter exceeded (stationarity " +
                                  std::to_string(st) + ")",
                              std::move(last));
    }
    // backtracking along the projection arc; the noise floor keeps the
    // Armijo test meaningful when the predicted decrease reaches roundoff
    Eigen::VectorXd z_new, u_new;
    double j_new = j;
    double step = tau;
    bool accepted = false;
    const double noise = 4e-15 * (std::abs(j) + 1.0);
    for (int bt = 0; bt < 60; ++bt) {
      z_new = clamp_vec(z - step * g);
      const Eigen::VectorXd dz = z_new - z;
      const double slope = g.cwiseProduct(dz).dot(sys.areas);
      if (detail::weighted_norm(dz, sys.areas) == 0.0) break;
      u_new = sys.solve_state(sys.B * z_new);
      j_new = cost(z_new, u_new);
      if (j_new <= j + 1e-4 * slope + noise) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // projection arc exhausted; at a box-stationary point the residual
      // check below terminates the loop
      z_new = z;
      u_new = u;
      j_new = j;
    }

    const Eigen::VectorXd p_new = sys.solve_adjoint(u_new);
    const Eigen::VectorXd g_new =
        (sys.B.transpose() * p_new).cwiseQuotient(sys.areas) + alpha * z_new;

    // Barzilai-Borwein step for the next iteration
    const Eigen::VectorXd dz = z_new - z;
    const Eigen::VectorXd dg = g_new - g;
    const double sy = dz.cwiseProduct(dg).dot(sys.areas);
    const double ss = dz.cwiseAbs2().dot(sys.areas);
    tau = (sy > 1e-300 && ss > 0.0) ? std::clamp(ss / sy, 1e-6 / alpha, 1e6 / alpha) : step;

    z = std::move(z_new);
    u = std::move(u_new);
    p = p_new;
    g = g_new;
    j = j_new;
    st = stationarity(z, p);
    if (trace) trace(it, j, st);
    if (!accepted && st > pb.opt_tol) {
      OcpSolution last{StateField{u}, StateField{p},
                       ControlField{z, pb.a, pb.b}, false, alpha, it, st, j};
      throw OptimizationError("solve_fully_discrete: line search failed (stationarity " +
                                  std::to_string(st) + ")",
                              std::move(last));
    }
  }

  return OcpSolution{StateField{u}, StateField{p}, ControlField{z, pb.a, pb.b},
                     false,         alpha,         it,
                     st,            j};
}

inline OcpSolution solve_fully_discrete(const OcpProblem& problem, const Mesh& mesh,
                                        const QuadratureSpec& quad = {},
                                        const AssemblyOptions& opts = {},
                                        const OptimizerTrace& trace = nullptr) {
  return solve_fully_discrete(assemble_ocp(problem, mesh, quad, opts), trace);
}

namespace detail {

// load vector of the clipped P1 function clamp(-p/alpha): per-element Gauss
// of a function with possible clipping kinks inside elements
inline Eigen::VectorXd control_load_va(const DiscreteOcp& sys, const Eigen::VectorXd& p) {
  const Mesh& mesh = *sys.mesh;
  const TriRule rule = triangle_rule(sys.problem.load_order);
  const double alpha = sys.problem.alpha;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.n_interior());
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    double ploc[3];
    for (int k = 0; k < 3; ++k) {
      const int d = mesh.dof_of_vertex[tri[k]];
      ploc[k] = d >= 0 ? p[d] : 0.0;
    }
    const double J = 2.0 * mesh.elem_area[t];
    for (const auto& q : rule.pts) {
      const double lam[3] = {1.0 - q.u - q.v, q.u, q.v};
      const double ph = lam[0] * ploc[0] + lam[1] * ploc[1] + lam[2] * ploc[2];
      const double g = proj_box(-ph / alpha, sys.problem.a, sys.problem.b);
      for (int k = 0; k < 3; ++k) {
        const int d = mesh.dof_of_vertex[tri[k]];
        if (d >= 0) load[d] += J * q.w * g * lam[k];
      }
    }
  }
  return load;
}

}  // namespace detail

// Variational discretization: the control space is not discretized; the
// optimality system is closed by g = clamp(-p/alpha) and solved by damped
// fixed-point iteration on the adjoint, stopping when the undamped adjoint
// update falls below opt_tol in L2.
inline OcpSolution solve_variational(const DiscreteOcp& sys, const OptimizerTrace& trace = nullptr) {
  const OcpProblem& pb = sys.problem;
  const Mesh& mesh = *sys.mesh;

  Eigen::VectorXd p = Eigen::VectorXd::Zero(mesh.n_interior());
  Eigen::VectorXd u = sys.solve_state(detail::control_load_va(sys, p));
  double theta = 1.0;
  double res_prev = std::numeric_limits<double>::max();
  int it = 0;

  auto l2_mass = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(sys.M * v)); };

  while (true) {
    const Eigen::VectorXd p_next = sys.solve_adjoint(u);
    const double res = l2_mass(p_next - p);
    if (trace) trace(it, 0.0, res);
    if (res <= pb.opt_tol) {
      p = p_next;
      u = sys.solve_state(detail::control_load_va(sys, p));
      break;
    }
    if (++it > pb.max_iter) {
      OcpSolution last{StateField{u}, StateField{p}, ControlField{}, true, pb.alpha, it - 1, res, 0.0};
      last.control.a = pb.a;
      last.control.b = pb.b;
      throw OptimizationError("solve_variational: max_iter exceeded (residual " +
                                  std::to_string(res) + ")",
                              std::move(last));
    }
    theta = res < res_prev ? std::min(1.0, theta * 1.25) : std::max(0.05, theta * 0.5);
    res_prev = res;
    p += theta * (p_next - p);
    u = sys.solve_state(detail::control_load_va(sys, p));
  }

  OcpSolution sol;
  sol.state = StateField{u};
  sol.adjoint = StateField{p};
  sol.semidiscrete = true;
  sol.alpha = pb.alpha;
  sol.control.a = pb.a;
  sol.control.b = pb.b;
  // element averages of the implicit control, for reporting
  sol.control.values.resize(mesh.n_elements());
  const TriRule rule = triangle_rule(pb.load_order);
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    double v = 0.0;
    for (const auto& q : rule.pts)
      v += q.w * sol.control_at(mesh, t, a + q.u * (b - a) + q.v * (c - a));
    sol.control.values[t] = 2.0 * v;
  }
  sol.iterations = it;
  sol.final_stationarity = 0.0;
  sol.j_value = 0.5 * sys.misfit_sq(u) +
                0.5 * pb.alpha *
                    [&] {
                      double acc = 0.0;
                      for (int t = 0; t < mesh.n_elements(); ++t) {
                        const auto& tri = mesh.triangles[t];
                        const Vec2 &aa = mesh.vertices[tri[0]], &bb = mesh.vertices[tri[1]],
                                   &cc = mesh.vertices[tri[2]];
                        const double J = 2.0 * mesh.elem_area[t];
                        for (const auto& q : rule.pts) {
                          const double g =
                              sol.control_at(mesh, t, aa + q.u * (bb - aa) + q.v * (cc - aa));
                          acc += J * q.w * g * g;
                        }
                      }
                      return acc;
                    }();
  return sol;
}

inline OcpSolution solve_variational(const OcpProblem& problem, const Mesh& mesh,
                                     const QuadratureSpec& quad = {},
                                     const AssemblyOptions& opts = {},
                                     const OptimizerTrace& trace = nullptr) {
  return solve_variational(assemble_ocp(problem, mesh, quad, opts), trace);
}

}  // namespace fracopt
