#pragma once

// L2 errors, the energy-norm error through the algebraic identity
//   ||ubar - u_T||_s^2 = <f + zbar, ubar> - 2 <zbar, u_T> - <f, u_T> + <z_T, u_T>,
// and experimental orders of convergence.

#include "fracopt/control.hpp"
#include "fracopt/exact.hpp"
#include "fracopt/mesh.hpp"
#include "fracopt/solver.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

namespace fracopt {

// sqrt( sum_K int_K (fh - exact)^2 ), fh given element-wise. When the exact
// function kinks along a circle (clipped benchmark controls), elements
// crossing `split_circle` are integrated on a uniform subdivision.
inline double l2_error(const Mesh& mesh, const std::function<double(int, const Vec2&)>& fh,
                       const std::function<double(const Vec2&)>& exact, int quad_order = 6,
                       double split_circle = -1.0) {
  const TriRule rule = triangle_rule(quad_order);
  double total = 0.0;
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    int splits = 0;
    if (split_circle > 0.0) {
      double rmin = std::numeric_limits<double>::max(), rmax = 0.0;
      for (int k = 0; k < 3; ++k) {
        rmin = std::min(rmin, mesh.vertices[tri[k]].norm());
        rmax = std::max(rmax, mesh.vertices[tri[k]].norm());
      }
      if (rmin - 0.3 * mesh.elem_diam[t] <= split_circle && split_circle <= rmax) splits = 3;
    }
    struct Cell {
      Vec2 a, b, c;
    };
    std::vector<Cell> cells = {{a, b, c}};
    for (int l = 0; l < splits; ++l) {
      std::vector<Cell> next;
      for (const auto& cl : cells) {
        const Vec2 m01 = 0.5 * (cl.a + cl.b), m12 = 0.5 * (cl.b + cl.c), m02 = 0.5 * (cl.a + cl.c);
        next.push_back({cl.a, m01, m02});
        next.push_back({m01, cl.b, m12});
        next.push_back({m02, m12, cl.c});
        next.push_back({m01, m12, m02});
      }
      cells = std::move(next);
    }
    for (const auto& cl : cells) {
      const double J = std::abs(detail::cross2(cl.b - cl.a, cl.c - cl.a));
      for (const auto& q : rule.pts) {
        const Vec2 x = cl.a + q.u * (cl.b - cl.a) + q.v * (cl.c - cl.a);
        const double e = fh(t, x) - exact(x);
        total += J * q.w * e * e;
      }
    }
  }
  return std::sqrt(total);
}

inline double l2_error_state(const Mesh& mesh, const StateField& u,
                             const std::function<double(const Vec2&)>& exact, int quad_order = 6) {
  return l2_error(
      mesh, [&](int t, const Vec2& x) { return p1_value(mesh, u.coeffs, t, x); }, exact,
      quad_order);
}

inline double l2_error_control(const Mesh& mesh, const OcpSolution& sol,
                               const std::function<double(const Vec2&)>& exact,
                               int quad_order = 6, double split_circle = -1.0) {
  return l2_error(
      mesh, [&](int t, const Vec2& x) { return sol.control_at(mesh, t, x); }, exact, quad_order,
      split_circle);
}

struct EnergyErrorOptions {
  int radial_order = 16;   // Gauss-Jacobi order for the analytic pairing <f+zbar, ubar>
  int angular_order = 32;
  int elem_order = 8;      // per-element order for the discrete pairings
};

// Energy error of the state for the disc benchmark. The leading pairing is
// integrated in polar coordinates with the radial Gauss-Jacobi weight (1-r)^s
// absorbing the boundary singularity of ubar.
inline double energy_error_state(const Mesh& mesh, const DiscBenchmark& bench,
                                 const OcpSolution& sol, const EnergyErrorOptions& opts = {}) {
  const double s = bench.s;
  const Rule1d radial = gauss_jacobi_01(opts.radial_order, 0.0, s);
  const Rule1d angular = gauss_legendre_01(opts.angular_order);

  double term1 = 0.0;
  for (std::size_t i = 0; i < radial.size(); ++i) {
    const double r = radial.x[i];
    const double rw = radial.w[i] * r * std::pow(1.0 - r, -s);
    for (std::size_t j = 0; j < angular.size(); ++j) {
      const double th = 2.0 * std::numbers::pi * angular.x[j];
      const Vec2 x(r * std::cos(th), r * std::sin(th));
      term1 += rw * angular.w[j] * (bench.f(x) + bench.z(x)) * bench.u(x);
    }
  }
  term1 *= 2.0 * std::numbers::pi;

  // zbar and f kink along the active-set circle r = r_o; elements crossed by
  // it get a uniformly subdivided rule
  const TriRule rule = triangle_rule(opts.elem_order);
  double term_z = 0.0, term_f = 0.0, term_zT = 0.0;
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    double uloc[3];
    double usum = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int d = mesh.dof_of_vertex[tri[k]];
      uloc[k] = d >= 0 ? sol.state.coeffs[d] : 0.0;
      usum += uloc[k];
    }
    double rmin = std::numeric_limits<double>::max(), rmax = 0.0;
    for (int k = 0; k < 3; ++k) {
      rmin = std::min(rmin, mesh.vertices[tri[k]].norm());
      rmax = std::max(rmax, mesh.vertices[tri[k]].norm());
    }
    const bool kinked = rmin - mesh.elem_diam[t] * 0.3 <= bench.r_o && bench.r_o <= rmax;
    const int splits = kinked ? 3 : 0;
    struct Cell {
      Vec2 a, b, c;
    };
    std::vector<Cell> cells = {{a, b, c}};
    for (int l = 0; l < splits; ++l) {
      std::vector<Cell> next;
      for (const auto& cl : cells) {
        const Vec2 m01 = 0.5 * (cl.a + cl.b), m12 = 0.5 * (cl.b + cl.c), m02 = 0.5 * (cl.a + cl.c);
        next.push_back({cl.a, m01, m02});
        next.push_back({m01, cl.b, m12});
        next.push_back({m02, m12, cl.c});
        next.push_back({m01, m12, m02});
      }
      cells = std::move(next);
    }
    const Eigen::Matrix2d F = (Eigen::Matrix2d() << (b - a).x(), (c - a).x(), (b - a).y(),
                               (c - a).y())
                                  .finished();
    const Eigen::Matrix2d Finv = F.inverse();
    for (const auto& cl : cells) {
      const double J = std::abs(detail::cross2(cl.b - cl.a, cl.c - cl.a));
      for (const auto& q : rule.pts) {
        const Vec2 x = cl.a + q.u * (cl.b - cl.a) + q.v * (cl.c - cl.a);
        const Vec2 ref = Finv * (x - a);  // barycentric in the parent element
        const double uh = (1.0 - ref.x() - ref.y()) * uloc[0] + ref.x() * uloc[1] +
                          ref.y() * uloc[2];
        term_z += J * q.w * bench.z(x) * uh;
        term_f += J * q.w * bench.f(x) * uh;
        if (sol.semidiscrete) term_zT += J * q.w * sol.control_at(mesh, t, x) * uh;
      }
    }
    if (!sol.semidiscrete) term_zT += sol.control.values[t] * mesh.elem_area[t] * usum / 3.0;
  }

  double err2 = term1 - 2.0 * term_z - term_f + term_zT;
  if (err2 < 0.0) {
    if (std::abs(err2) > 1e-12 * std::abs(term1))
      std::cerr << "energy_error_state: identity produced " << err2
                << " < 0; clamping to zero\n";
    err2 = 0.0;
  }
  return std::sqrt(err2);
}

// --- convergence records ----------------------------------------------------

struct ConvergenceLevel {
  int level = 0;
  double h = 0.0;
  int N = 0;  // interior vertices
  double e_energy = 0.0;
  double e_l2_control = 0.0;
};

struct ConvergenceRecord {
  std::vector<ConvergenceLevel> levels;
};

// rate_k = log(e_k / e_{k+1}) / log(h_k / h_{k+1}); NaN where undefined
inline std::vector<double> eoc(const std::vector<double>& h, const std::vector<double>& e) {
  if (h.size() != e.size() || h.size() < 2)
    throw std::invalid_argument("eoc: need >= 2 matching levels");
  std::vector<double> rates;
  for (std::size_t k = 0; k + 1 < h.size(); ++k) {
    const bool ok = e[k] > 0.0 && e[k + 1] > 0.0 && h[k] != h[k + 1];
    rates.push_back(ok ? std::log(e[k] / e[k + 1]) / std::log(h[k] / h[k + 1])
                       : std::numeric_limits<double>::quiet_NaN());
  }
  return rates;
}

// least-squares slope of log e against log N (graded studies)
inline double loglog_slope_vs_n(const std::vector<double>& N, const std::vector<double>& e) {
  if (N.size() != e.size() || N.size() < 2)
    throw std::invalid_argument("loglog_slope_vs_n: need >= 2 levels");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(N.size());
  for (std::size_t k = 0; k < N.size(); ++k) {
    if (!(e[k] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double x = std::log(N[k]), y = std::log(e[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void write_csv(std::ostream& os, const ConvergenceRecord& rec) {
  os << "level,h,N,e_energy,e_l2_control,rate_energy,rate_control\n";
  char buf[256];
  for (std::size_t k = 0; k < rec.levels.size(); ++k) {
    const auto& lv = rec.levels[k];
    std::string rate_e = "", rate_c = "";
    if (k > 0) {
      const auto& pv = rec.levels[k - 1];
      auto rate = [&](double e0, double e1) -> std::string {
        if (!(e0 > 0.0 && e1 > 0.0) || pv.h == lv.h) return "";
        char rb[32];
        std::snprintf(rb, sizeof rb, "%.6g", std::log(e0 / e1) / std::log(pv.h / lv.h));
        return rb;
      };
      rate_e = rate(pv.e_energy, lv.e_energy);
      rate_c = rate(pv.e_l2_control, lv.e_l2_control);
    }
    std::snprintf(buf, sizeof buf, "%d,%.12g,%d,%.12g,%.12g,%s,%s\n", lv.level, lv.h, lv.N,
                  lv.e_energy, lv.e_l2_control, rate_e.c_str(), rate_c.c_str());
    os << buf;
  }
}

// --- reference-solution protocol (L-shape) ----------------------------------
// Coarse fields are evaluated at fine-mesh points by point location in the
// coarse mesh; with nested refinements the transfer is exact.

class CoarseFieldEvaluator {
 public:
  CoarseFieldEvaluator(const Mesh& coarse, Eigen::VectorXd coeffs)
      : mesh_(&coarse), locator_(coarse), coeffs_(std::move(coeffs)) {}

  [[nodiscard]] double operator()(const Vec2& x) const {
    const int t = locator_.locate(x, 1e-9);
    if (t < 0) return 0.0;  // outside the coarse mesh: zero extension
    return p1_value(*mesh_, coeffs_, t, x);
  }

 private:
  const Mesh* mesh_;
  PointLocator locator_;
  Eigen::VectorXd coeffs_;
};

// || u_ref - u_coarse ||_s via the fine stiffness quadratic form
inline double energy_error_vs_reference(const Mesh& fine, const StiffnessMatrix& A_fine,
                                        const Eigen::VectorXd& u_ref, const Mesh& coarse,
                                        const Eigen::VectorXd& u_coarse) {
  const CoarseFieldEvaluator eval(coarse, u_coarse);
  Eigen::VectorXd e = u_ref;
  for (int i = 0; i < fine.n_interior(); ++i)
    e[i] -= eval(fine.vertices[fine.interior_vertices[i]]);
  return std::sqrt(e.dot(A_fine.entries.selfadjointView<Eigen::Lower>() * e));
}

// || z_ref - z_coarse ||_L2, both piecewise constant, evaluated on the fine mesh
inline double l2_control_error_vs_reference(const Mesh& fine, const OcpSolution& ref,
                                            const Mesh& coarse, const OcpSolution& sol) {
  const PointLocator loc(coarse);
  double total = 0.0;
  for (int t = 0; t < fine.n_elements(); ++t) {
    const Vec2 xc = fine.barycenter(t);
    const int tc = loc.locate(xc, 1e-9);
    const double zc = tc >= 0 ? sol.control_at(coarse, tc, xc) : 0.0;
    const double d = ref.control_at(fine, t, xc) - zc;
    total += fine.elem_area[t] * d * d;
  }
  return std::sqrt(total);
}

}  // namespace fracopt
