#pragma once

// Solvers for the assembled SPD systems: Jacobi-preconditioned conjugate
// gradients, with a dense Cholesky path for small systems. Results are
// deterministic for fixed inputs.

#include "fracopt/assembly.hpp"
#include "fracopt/mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fracopt {

// Coefficients of a P1 function over the interior vertices; implied zero
// extension on the boundary and outside Omega.
struct StateField {
  Eigen::VectorXd coeffs;
};

inline double p1_value(const Mesh& mesh, const Eigen::VectorXd& coeffs, int t, const Vec2& x) {
  const auto lam = barycentric(mesh, t, x);
  double v = 0.0;
  for (int k = 0; k < 3; ++k) {
    const int d = mesh.dof_of_vertex[mesh.triangles[t][k]];
    if (d >= 0) v += lam[k] * coeffs[d];
  }
  return v;
}

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SolveMethod { automatic, cg, direct };

struct SolveOptions {
  double tol = 1e-10;
  SolveMethod method = SolveMethod::automatic;
  int direct_cutoff = 2000;  // dense factorization up to this many unknowns
  int max_iterations = 0;    // 0: max(1000, 2n)
};

namespace detail {

inline Eigen::VectorXd solve_pcg(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol,
                                 int max_it, int* iterations_out) {
  const Eigen::Index n = A.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (iterations_out) *iterations_out = 0;
  if (bnorm == 0.0) return x;

  const Eigen::VectorXd inv_diag = A.diagonal().cwiseInverse();
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= max_it; ++it) {
    const Eigen::VectorXd Ap = A.selfadjointView<Eigen::Lower>() * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) throw SolverError("cg: matrix is not positive definite");
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    if (iterations_out) *iterations_out = it;
    if (r.norm() <= tol * bnorm) return x;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw SolverError("cg: no convergence within " + std::to_string(max_it) + " iterations");
}

}  // namespace detail

inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs,
                                 const SolveOptions& opts = {}, int* iterations_out = nullptr) {
  if (A.rows() != A.cols() || A.rows() != rhs.size())
    throw SolverError("solve: dimension mismatch");
  const Eigen::Index n = A.rows();
  const bool direct = opts.method == SolveMethod::direct ||
                      (opts.method == SolveMethod::automatic && n <= opts.direct_cutoff);
  if (direct) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw SolverError("solve: Cholesky factorization failed (matrix not SPD)");
    if (iterations_out) *iterations_out = 0;
    return llt.solve(rhs);
  }
  const int max_it = opts.max_iterations > 0 ? opts.max_iterations
                                             : std::max<int>(1000, 2 * static_cast<int>(n));
  return detail::solve_pcg(A, rhs, opts.tol, max_it, iterations_out);
}

inline StateField solve(const StiffnessMatrix& A, const Eigen::VectorXd& rhs, double tol = 1e-10) {
  SolveOptions opts;
  opts.tol = tol;
  return StateField{solve_spd(A.entries, rhs, opts)};
}

// Cached dense factorization for repeated solves against one matrix
// (state/adjoint solves inside an optimization loop).
class FactorizedOperator {
 public:
  explicit FactorizedOperator(const Eigen::MatrixXd& A) : llt_(A) {
    if (llt_.info() != Eigen::Success)
      throw SolverError("FactorizedOperator: Cholesky factorization failed");
  }
  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    return llt_.solve(rhs);
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace fracopt
