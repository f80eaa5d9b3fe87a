#pragma once

// Galerkin assembly for the integral fractional Laplacian with P1 elements.
//
// The bilinear form
//   A(v,w) = C(2,s)/2 * iint (v(x)-v(y))(w(x)-w(y)) |x-y|^{-2-2s} dx dy
// over R^2 x R^2 splits, for functions vanishing outside Omega, into
// element-pair integrals over Omega x Omega plus the complement term
//   2 * int_Omega v(x) w(x) omega_s(x) dx,  omega_s(x) = int_{Omega^c} |x-y|^{-2-2s} dy.
//
// Element pairs are classified as identical / edge-adjacent / vertex-adjacent
// / disjoint. Touching pairs use regularizing coordinate transforms on the
// pulled-back reference domain That x That: relative coordinates are scaled
// radially, and because P1 basis differences are exactly linear in the radial
// variable while the kernel is an exact power, the radial direction (and the
// translation along a shared edge) integrates in closed form. What remains is
// a smooth integral over the angular/section variables, handled by tensor
// Gauss of order `order_singular` per coordinate. Disjoint pairs use conical
// Gauss products, with elevated order inside the near field.
//
// Quadrature nodes produced by each transform are stored as plain point pairs
// on That x That with folded weights, so every pair class is evaluated by one
// generic kernel loop.

#include "fracopt/mesh.hpp"
#include "fracopt/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <istream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fracopt {

// C(n,s) = 2^{2s} s Gamma(s + n/2) / (pi^{n/2} Gamma(1-s))
inline double normalization_constant(int n, double s) {
  if (n != 1 && n != 2) throw std::invalid_argument("normalization_constant: n must be 1 or 2");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("normalization_constant: s must be in (0,1)");
  return std::pow(2.0, 2.0 * s) * s * std::tgamma(s + 0.5 * n) /
         (std::pow(std::numbers::pi, 0.5 * n) * std::tgamma(1.0 - s));
}

struct QuadratureSpec {
  int order_disjoint = 3;   // conical Gauss order per triangle, well-separated pairs
  int order_singular = 5;   // Gauss order per section coordinate, touching pairs
  double near_field_factor = 1.0;  // dist < nf * (h_T1 + h_T2) elevates the order

  void validate() const {
    if (order_disjoint < 1 || order_singular < 1)
      throw std::invalid_argument("QuadratureSpec: orders must be >= 1");
    if (!(near_field_factor >= 0.0))
      throw std::invalid_argument("QuadratureSpec: near_field_factor must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// complement weight omega_s
// ---------------------------------------------------------------------------

namespace detail {

// In polar coordinates around x, int_{Omega^c} |x-y|^{-2-2s} dy
//   = (1/2s) int_0^{2pi} sum_k ( a_k(t)^{-2s} - b_k(t)^{-2s} ) dt
// over the intervals (a_k, b_k) in which the ray x + r w(t) runs through the
// complement (b_last = infinity).

inline bool clip_ray_box(const Vec2& x, const Vec2& d, const Vec2& lo, const Vec2& hi,
                         double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (x[k] < lo[k] || x[k] > hi[k]) return false;
    } else {
      double a = (lo[k] - x[k]) / d[k], b = (hi[k] - x[k]) / d[k];
      if (a > b) std::swap(a, b);
      t0 = std::max(t0, a);
      t1 = std::min(t1, b);
    }
  }
  return t1 > std::max(t0, 0.0);
}

// complement tail sum along one ray through the L-shape
inline double lshape_ray_tail(const Vec2& x, double theta, double s) {
  const Vec2 d(std::cos(theta), std::sin(theta));
  double b0, b1, n0, n1;
  const bool in_big = clip_ray_box(x, d, Vec2(0, 0), Vec2(2, 2), b0, b1);
  const bool in_notch = clip_ray_box(x, d, Vec2(1, 1), Vec2(2, 2), n0, n1);

  // intervals of the ray inside Omega = [0,2]^2 \ [1,2]^2
  double iv[2][2];
  int niv = 0;
  if (in_big) {
    if (in_notch) {
      const double c = std::max(n0, b0), e = std::min(n1, b1);
      if (e <= c) {
        iv[niv][0] = b0, iv[niv][1] = b1, ++niv;
      } else {
        if (c > b0) iv[niv][0] = b0, iv[niv][1] = c, ++niv;
        if (b1 > e) iv[niv][0] = e, iv[niv][1] = b1, ++niv;
      }
    } else {
      iv[niv][0] = b0, iv[niv][1] = b1, ++niv;
    }
  }
  // complement pieces of (0, inf); the ray starts inside Omega so cur > 0 below
  double val = 0.0, cur = 0.0;
  for (int k = 0; k < niv; ++k) {
    if (iv[k][0] > cur) val += std::pow(cur, -2.0 * s) - std::pow(iv[k][0], -2.0 * s);
    cur = std::max(cur, iv[k][1]);
  }
  val += std::pow(cur, -2.0 * s);
  return val;
}

// bisection-adaptive Gauss with a per-panel relative tolerance (the target is
// well below the discretization error, so the mild error accumulation over
// panels is acceptable and keeps the recursion shallow near integrand peaks)
template <typename F>
double adaptive_gl(const F& f, double a, double b, double tol, int depth, const Rule1d& gl) {
  auto panel = [&](double lo, double hi) {
    double v = 0.0;
    for (std::size_t q = 0; q < gl.size(); ++q) v += gl.w[q] * f(lo + (hi - lo) * gl.x[q]);
    return v * (hi - lo);
  };
  const double mid = 0.5 * (a + b);
  const double whole = panel(a, b), left = panel(a, mid), right = panel(mid, b);
  if (depth <= 0 || std::abs(left + right - whole) <= tol * (std::abs(left + right) + 1e-14))
    return left + right;
  return adaptive_gl(f, a, mid, tol, depth - 1, gl) +
         adaptive_gl(f, mid, b, tol, depth - 1, gl);
}

}  // namespace detail

inline double weight_omega_s(const Vec2& x, Domain domain, double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("weight_omega_s: s must be in (0,1)");
  const double dist = boundary_distance(domain, x);
  if (!(dist > 0.0)) throw std::domain_error("weight_omega_s: point is on the boundary");

  if (domain == Domain::disc) {
    const double r = x.norm();
    if (r >= 1.0) throw std::domain_error("weight_omega_s: point outside the disc");
    // first-exit distance R(t) = sqrt(1 - r^2 sin^2 t) - r cos t; the disc is
    // convex so the ray never re-enters. Integrand peaks at t = 0 with width
    // ~ sqrt(1-r); composite panels double geometrically away from the peak.
    static const Rule1d gl = gauss_legendre_01(12);
    auto g = [&](double t) {
      const double st = r * std::sin(t);
      const double R = std::sqrt(1.0 - st * st) - r * std::cos(t);
      return std::pow(R, -2.0 * s);
    };
    double total = 0.0;
    double lo = 0.0, width = std::max(0.5 * (1.0 - r), 1e-9);
    while (lo < std::numbers::pi) {
      const double hi = std::min(lo + width, std::numbers::pi);
      for (std::size_t q = 0; q < gl.size(); ++q)
        total += gl.w[q] * (hi - lo) * g(lo + (hi - lo) * gl.x[q]);
      lo = hi;
      width *= 2.0;
    }
    return 2.0 * total / (2.0 * s);
  }

  // L-shape: exact interval arithmetic along each ray; split the angular
  // integral at the directions of the corner points, refine adaptively.
  static const Rule1d gl7 = gauss_legendre_01(7);
  std::vector<double> cuts;
  const Vec2 corners[7] = {{0, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {1, 1}};
  for (const auto& c : corners) {
    double a = std::atan2(c.y() - x.y(), c.x() - x.x());
    if (a < 0) a += 2.0 * std::numbers::pi;
    cuts.push_back(a);
  }
  cuts.push_back(0.0);
  cuts.push_back(2.0 * std::numbers::pi);
  std::sort(cuts.begin(), cuts.end());
  auto f = [&](double t) { return detail::lshape_ray_tail(x, t, s); };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] - cuts[k] < 1e-14) continue;
    total += detail::adaptive_gl(f, cuts[k], cuts[k + 1], 1e-10, 24, gl7);
  }
  return total / (2.0 * s);
}

// ---------------------------------------------------------------------------
// pair quadrature rules on That x That
// ---------------------------------------------------------------------------

struct PairQuadPoint {
  double xi0, xi1, eta0, eta1, w;
};
using PairRule = std::vector<PairQuadPoint>;

namespace detail {

// Identical pair, T1 = T2. With z = eta - xi the inner xi-domain is again a
// corner triangle of side 1 - |z|_hex, the P1 numerator depends on z only,
// and the radial direction integrates to Beta(2-2s, 3). Six hexagon cones
// remain, each a smooth 1d integral.
inline PairRule rule_identical(double s, int n) {
  static const double hexv[6][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};
  const double Bs = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
  const Rule1d gl = gauss_legendre_01(n);
  const double wstar = 0.5;
  PairRule rule;
  rule.reserve(6 * gl.size());
  for (int m = 0; m < 6; ++m) {
    const Vec2 A(hexv[m][0], hexv[m][1]);
    const Vec2 B(hexv[(m + 1) % 6][0], hexv[(m + 1) % 6][1]);
    for (std::size_t q = 0; q < gl.size(); ++q) {
      const Vec2 zeta = A + gl.x[q] * (B - A);
      const Vec2 z = wstar * zeta;
      const double a0 = std::max(0.0, -z.x()), a1 = std::max(0.0, -z.y());
      const double ell = 1.0 - std::max(0.0, z.x() + z.y()) - a0 - a1;
      const double xi0 = a0 + ell / 3.0, xi1 = a1 + ell / 3.0;
      rule.push_back({xi0, xi1, xi0 + z.x(), xi1 + z.y(),
                      Bs * 0.5 * gl.w[q] * std::pow(wstar, 2.0 * s)});
    }
  }
  return rule;
}

// Edge-adjacent pair; both maps carry the reference edge {xi1 = 0} onto the
// shared physical edge with the same orientation. The singular triple
// (xi0-eta0, xi1, eta1) is scaled radially over the faces of its positive
// section; the translation along the edge is exact (numerator independent of
// it) and the radial direction integrates to Beta(3-2s, 2).
inline PairRule rule_edge(double s, int n) {
  const double beta = 1.0 / ((3.0 - 2.0 * s) * (4.0 - 2.0 * s));
  const double common = beta * std::pow(2.0, -2.0 * s);
  const Rule1d gl = gauss_legendre_01(n);
  const TriRule tr = triangle_rule(n);
  PairRule rule;
  rule.reserve(4 * gl.size() * gl.size() + 4 * tr.size());

  const double tstar = 0.25;  // (1 - W*) * tau* with W* = tau* = 1/2
  auto plus = [&](double d, double s1, double s2, double c, double wgt) {
    const double w = 0.5 / c;
    rule.push_back({tstar + w * d, w * s1, tstar, w * s2, wgt * common / (c * c * c)});
  };
  auto minus = [&](double d, double s1, double s2, double c, double wgt) {
    const double w = 0.5 / c;
    rule.push_back({tstar, w * s1, tstar + w * d, w * s2, wgt * common / (c * c * c)});
  };

  for (std::size_t i = 0; i < gl.size(); ++i)
    for (std::size_t j = 0; j < gl.size(); ++j) {
      const double y1 = gl.x[i], y2 = gl.x[j], wq = gl.w[i] * gl.w[j];
      plus(1.0, y1, y2, 1.0 + y1, wq);   // |d| largest, xi1 - eta1 > 0
      plus(y1, 1.0, y2, 1.0 + y1, wq);   // xi1 largest
      minus(1.0, y1, y2, 1.0 + y2, wq);  // |d| largest, xi1 - eta1 < 0
      minus(y1, y2, 1.0, 1.0 + y1, wq);  // eta1 largest
    }
  for (const auto& p : tr.pts) {
    plus(p.u, p.v, 1.0, 1.0, p.w);                                  // eta1 largest, u+v <= 1
    plus(1.0 - p.u, 1.0 - p.v, 1.0, 2.0 - p.u - p.v, p.w);          // eta1 largest, u+v >= 1
    minus(p.u, 1.0, p.v, 1.0, p.w);                                 // xi1 largest, u+v <= 1
    minus(1.0 - p.u, 1.0, 1.0 - p.v, 2.0 - p.u - p.v, p.w);         // xi1 largest, u+v >= 1
  }
  return rule;
}

// Vertex-adjacent pair; both maps send the reference origin to the shared
// vertex. All four reference coordinates scale radially (int w^{3-2s} dw =
// 1/(4-2s)); the section is a hypotenuse segment times the other reference
// triangle, in each of the two symmetric roles.
inline PairRule rule_vertex(double s, int n) {
  const double c0 = (1.0 / (4.0 - 2.0 * s)) * std::pow(0.5, 2.0 * s);
  const Rule1d gl = gauss_legendre_01(n);
  const TriRule tr = triangle_rule(n);
  PairRule rule;
  rule.reserve(2 * gl.size() * tr.size());
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double h0 = 0.5 * gl.x[i], h1 = 0.5 * (1.0 - gl.x[i]);
    for (const auto& p : tr.pts) {
      const double e0 = 0.5 * p.u, e1 = 0.5 * p.v, w = c0 * gl.w[i] * p.w;
      rule.push_back({h0, h1, e0, e1, w});
      rule.push_back({e0, e1, h0, h1, w});
    }
  }
  return rule;
}

inline PairRule rule_disjoint(int n) {
  const TriRule tr = triangle_rule(n);
  PairRule rule;
  rule.reserve(tr.size() * tr.size());
  for (const auto& p : tr.pts)
    for (const auto& q : tr.pts) rule.push_back({p.u, p.v, q.u, q.v, p.w * q.w});
  return rule;
}

inline double segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  // distance between segments [a,b] and [c,d]
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return cross2(q - p, r - p);
  };
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return 0.0;  // proper crossing
  return std::min(std::min(point_segment_distance(c, a, b), point_segment_distance(d, a, b)),
                  std::min(point_segment_distance(a, c, d), point_segment_distance(b, c, d)));
}

inline double triangle_distance(const Vec2 A[3], const Vec2 B[3]) {
  double d = std::numeric_limits<double>::max();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      d = std::min(d, segment_distance(A[i], A[(i + 1) % 3], B[j], B[(j + 1) % 3]));
  return d;
}

// Per-pair local contribution: vertex slots in each triangle's case-specific
// local ordering, plus the dense (nv x nv) matrix of
//   iint (phi_i(x)-phi_i(y)) (phi_j(x)-phi_j(y)) |x-y|^{-2-2s}.
struct PairLocal {
  int nv = 0;
  int gid[6];
  double mat[6][6];
};

inline void eval_pair(const Vec2 V1[3], const Vec2 V2[3], const int slot1[6], const int slot2[6],
                      int nv, const PairRule& rule, double s, PairLocal& out) {
  const double J1 = std::abs(cross2(V1[1] - V1[0], V1[2] - V1[0]));
  const double J2 = std::abs(cross2(V2[1] - V2[0], V2[2] - V2[0]));
  const double expo = -(1.0 + s);
  double acc[6][6] = {};
  for (const auto& q : rule) {
    const double b1[3] = {1.0 - q.xi0 - q.xi1, q.xi0, q.xi1};
    const double b2[3] = {1.0 - q.eta0 - q.eta1, q.eta0, q.eta1};
    const Vec2 x = V1[0] + q.xi0 * (V1[1] - V1[0]) + q.xi1 * (V1[2] - V1[0]);
    const Vec2 y = V2[0] + q.eta0 * (V2[1] - V2[0]) + q.eta1 * (V2[2] - V2[0]);
    const double d2 = (x - y).squaredNorm();
    const double kw = q.w * std::pow(d2, expo);
    double g[6];
    for (int i = 0; i < nv; ++i)
      g[i] = (slot1[i] >= 0 ? b1[slot1[i]] : 0.0) - (slot2[i] >= 0 ? b2[slot2[i]] : 0.0);
    for (int i = 0; i < nv; ++i) {
      const double gi = kw * g[i];
      for (int j = i; j < nv; ++j) acc[i][j] += gi * g[j];
    }
  }
  out.nv = nv;
  for (int i = 0; i < nv; ++i)
    for (int j = i; j < nv; ++j) {
      out.mat[i][j] = J1 * J2 * acc[i][j];
      out.mat[j][i] = out.mat[i][j];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stiffness assembly
// ---------------------------------------------------------------------------

struct StiffnessMatrix {
  Eigen::MatrixXd entries;  // interior x interior
  double s = 0.0;
  double c_ns = 0.0;
  QuadratureSpec quad;
};

struct AssemblyOptions {
  int threads = 1;
  int dense_cap = 15000;          // hard limit on interior vertices (dense storage)
  bool far_field_reduction = true;  // lower order for pairs separated by > 4 diameters
};

namespace detail {

class PairAssembler {
 public:
  PairAssembler(const Mesh& mesh, double s, const QuadratureSpec& quad, bool far_reduction)
      : mesh_(mesh), s_(s), quad_(quad) {
    // the identical-pair transform leaves a single 1d section integral, so a
    // higher order there costs next to nothing; edge/vertex sections carry
    // two extra orders to balance their slower per-order convergence
    rule_identical_ = rule_identical(s, 2 * quad.order_singular + 4);
    rule_edge_ = rule_edge(s, quad.order_singular + 2);
    rule_vertex_ = rule_vertex(s, quad.order_singular + 2);
    rule_disjoint_ = rule_disjoint(quad.order_disjoint);
    rule_near_ = rule_disjoint(quad.order_singular);
    rule_far_ = far_reduction ? rule_disjoint(std::max(2, quad.order_disjoint - 1))
                              : rule_disjoint(quad.order_disjoint);
  }

  void compute(int t1, int t2, PairLocal& out) const {
    const auto& tri1 = mesh_.triangles[t1];
    const auto& tri2 = mesh_.triangles[t2];
    Vec2 V1[3], V2[3];
    int slot1[6], slot2[6];

    if (t1 == t2) {
      for (int k = 0; k < 3; ++k) {
        V1[k] = V2[k] = mesh_.vertices[tri1[k]];
        out.gid[k] = tri1[k];
        slot1[k] = slot2[k] = k;
      }
      eval_pair(V1, V2, slot1, slot2, 3, rule_identical_, s_, out);
      return;
    }

    int shared[3], n_shared = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (tri1[a] == tri2[b]) shared[n_shared++] = tri1[a];

    if (n_shared == 2) {
      int gid1[3], gid2[3];
      order_with_lead(tri1, shared, 2, gid1);
      order_with_lead(tri2, shared, 2, gid2);
      for (int k = 0; k < 3; ++k) {
        V1[k] = mesh_.vertices[gid1[k]];
        V2[k] = mesh_.vertices[gid2[k]];
        out.gid[k] = gid1[k];
      }
      out.gid[3] = gid2[2];
      const int s1[4] = {0, 1, 2, -1}, s2[4] = {0, 1, -1, 2};
      std::memcpy(slot1, s1, sizeof s1);
      std::memcpy(slot2, s2, sizeof s2);
      eval_pair(V1, V2, slot1, slot2, 4, rule_edge_, s_, out);
      return;
    }
    if (n_shared == 1) {
      int gid1[3], gid2[3];
      order_with_lead(tri1, shared, 1, gid1);
      order_with_lead(tri2, shared, 1, gid2);
      for (int k = 0; k < 3; ++k) {
        V1[k] = mesh_.vertices[gid1[k]];
        V2[k] = mesh_.vertices[gid2[k]];
        out.gid[k] = gid1[k];
      }
      out.gid[3] = gid2[1];
      out.gid[4] = gid2[2];
      const int s1[5] = {0, 1, 2, -1, -1}, s2[5] = {0, -1, -1, 1, 2};
      std::memcpy(slot1, s1, sizeof s1);
      std::memcpy(slot2, s2, sizeof s2);
      eval_pair(V1, V2, slot1, slot2, 5, rule_vertex_, s_, out);
      return;
    }

    for (int k = 0; k < 3; ++k) {
      V1[k] = mesh_.vertices[tri1[k]];
      V2[k] = mesh_.vertices[tri2[k]];
      out.gid[k] = tri1[k];
      out.gid[3 + k] = tri2[k];
    }
    const int s1[6] = {0, 1, 2, -1, -1, -1}, s2[6] = {-1, -1, -1, 0, 1, 2};
    std::memcpy(slot1, s1, sizeof s1);
    std::memcpy(slot2, s2, sizeof s2);
    const double dist = triangle_distance(V1, V2);
    const double size = mesh_.elem_diam[t1] + mesh_.elem_diam[t2];
    const PairRule& rule = dist < quad_.near_field_factor * size ? rule_near_
                           : dist > 4.0 * size                   ? rule_far_
                                                                 : rule_disjoint_;
    eval_pair(V1, V2, slot1, slot2, 6, rule, s_, out);
  }

 private:
  // reorder a triangle's vertex ids so the shared ones come first, in the
  // order given by `lead` (the same for both triangles of the pair)
  static void order_with_lead(const std::array<int, 3>& tri, const int* lead, int nlead,
                              int gid[3]) {
    int n = nlead;
    for (int l = 0; l < nlead; ++l) gid[l] = lead[l];
    for (int k = 0; k < 3; ++k) {
      bool is_lead = false;
      for (int l = 0; l < nlead; ++l) is_lead |= (tri[k] == lead[l]);
      if (!is_lead) gid[n++] = tri[k];
    }
  }

  const Mesh& mesh_;
  double s_;
  QuadratureSpec quad_;
  PairRule rule_identical_, rule_edge_, rule_vertex_, rule_disjoint_, rule_near_, rule_far_;
};

}  // namespace detail

inline StiffnessMatrix assemble_stiffness(const Mesh& mesh, double s, const QuadratureSpec& quad,
                                          const AssemblyOptions& opts = {}) {
  quad.validate();
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("assemble_stiffness: s must be in (0,1)");
  const int N = mesh.n_interior();
  if (N == 0) throw std::invalid_argument("assemble_stiffness: mesh has no interior vertices");
  if (N > opts.dense_cap)
    throw std::runtime_error("assemble_stiffness: " + std::to_string(N) +
                             " interior vertices exceed the dense cap " +
                             std::to_string(opts.dense_cap));

  StiffnessMatrix A;
  A.s = s;
  A.c_ns = normalization_constant(2, s);
  A.quad = quad;
  A.entries = Eigen::MatrixXd::Zero(N, N);

  detail::PairAssembler assembler(mesh, s, quad, opts.far_field_reduction);
  const int nt = mesh.n_elements();
  const std::size_t n_pairs = static_cast<std::size_t>(nt) * (nt + 1) / 2;

  // unordered pair p -> (t1 <= t2), enumerated row by row
  auto pair_of = [nt](std::size_t p, int& t1, int& t2) {
    std::size_t lo = 0, hi = static_cast<std::size_t>(nt);
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const std::size_t off = mid * static_cast<std::size_t>(nt) - mid * (mid - 1) / 2;
      if (off <= p)
        lo = mid;
      else
        hi = mid;
    }
    t1 = static_cast<int>(lo);
    t2 = t1 + static_cast<int>(p - (lo * static_cast<std::size_t>(nt) - lo * (lo - 1) / 2));
  };
  auto pair_advance = [nt](int& t1, int& t2) {
    if (++t2 == nt) {
      ++t1;
      t2 = t1;
    }
  };

  const double half_cns = 0.5 * A.c_ns;
  auto scatter = [&](const detail::PairLocal& loc, bool off_diagonal_pair) {
    for (int i = 0; i < loc.nv; ++i) {
      const int di = mesh.dof_of_vertex[loc.gid[i]];
      if (di < 0) continue;
      for (int j = 0; j < loc.nv; ++j) {
        const int dj = mesh.dof_of_vertex[loc.gid[j]];
        if (dj < 0) continue;
        // (t2,t1) contributes the transpose of (t1,t2)
        const double v = off_diagonal_pair ? loc.mat[i][j] + loc.mat[j][i] : loc.mat[i][j];
        A.entries(di, dj) += half_cns * v;
      }
    }
  };

  const std::size_t block = 4096;
  std::vector<detail::PairLocal> slots(std::min(block, n_pairs));
  const int threads = std::max(1, opts.threads);

  int st1 = 0, st2 = 0;  // scatter cursor, advanced in pair-index order
  for (std::size_t p0 = 0; p0 < n_pairs; p0 += block) {
    const std::size_t p1 = std::min(p0 + block, n_pairs);
    const std::size_t len = p1 - p0;
    auto run_range = [&](std::size_t a, std::size_t b) {
      int t1, t2;
      pair_of(a, t1, t2);
      for (std::size_t p = a; p < b; ++p) {
        assembler.compute(t1, t2, slots[p - p0]);
        pair_advance(t1, t2);
      }
    };
    if (threads == 1) {
      run_range(p0, p1);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (int k = 0; k < threads; ++k)
        pool.emplace_back(run_range, p0 + len * k / threads, p0 + len * (k + 1) / threads);
      for (auto& t : pool) t.join();
    }
    // deterministic reduction: pair-index order, independent of thread count
    for (std::size_t p = p0; p < p1; ++p) {
      scatter(slots[p - p0], st1 != st2);
      pair_advance(st1, st2);
    }
  }

  // complement term: C(n,s) * int_T phi_a phi_b omega_s
  const TriRule rule_interior = triangle_rule(quad.order_disjoint + 1);
  const TriRule rule_boundary = triangle_rule(quad.order_singular + 2);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const bool touches = mesh.boundary_vertex[tri[0]] || mesh.boundary_vertex[tri[1]] ||
                         mesh.boundary_vertex[tri[2]];
    const TriRule& rule = touches ? rule_boundary : rule_interior;
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    const double J = 2.0 * mesh.elem_area[t];
    double loc[3][3] = {};
    for (const auto& q : rule.pts) {
      const Vec2 x = a + q.u * (b - a) + q.v * (c - a);
      const double om = weight_omega_s(x, mesh.domain, s);
      const double lam[3] = {1.0 - q.u - q.v, q.u, q.v};
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) loc[i][j] += q.w * om * lam[i] * lam[j];
    }
    for (int i = 0; i < 3; ++i) {
      const int di = mesh.dof_of_vertex[tri[i]];
      if (di < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = mesh.dof_of_vertex[tri[j]];
        if (dj < 0) continue;
        A.entries(di, dj) += A.c_ns * J * loc[std::min(i, j)][std::max(i, j)];
      }
    }
  }

  for (int i = 0; i < N; ++i)
    if (!(A.entries(i, i) > 0.0))
      throw std::runtime_error("assemble_stiffness: non-positive diagonal entry (quadrature breakdown)");
  return A;
}

// ---------------------------------------------------------------------------
// mass, coupling, load
// ---------------------------------------------------------------------------

// P1 mass matrix over interior vertices, exact closed form.
inline Eigen::SparseMatrix<double> assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.n_elements());
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = mesh.elem_area[t] / 12.0;
    for (int i = 0; i < 3; ++i) {
      const int di = mesh.dof_of_vertex[tri[i]];
      if (di < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = mesh.dof_of_vertex[tri[j]];
        if (dj < 0) continue;
        trip.emplace_back(di, dj, (i == j) ? 2.0 * a : a);
      }
    }
  }
  Eigen::SparseMatrix<double> M(mesh.n_interior(), mesh.n_interior());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

// B_{iK} = int_K phi_i = area(K)/3, interior vertices by element.
inline Eigen::SparseMatrix<double> assemble_coupling(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * mesh.n_elements());
  for (int t = 0; t < mesh.n_elements(); ++t)
    for (int k = 0; k < 3; ++k) {
      const int d = mesh.dof_of_vertex[mesh.triangles[t][k]];
      if (d >= 0) trip.emplace_back(d, t, mesh.elem_area[t] / 3.0);
    }
  Eigen::SparseMatrix<double> B(mesh.n_interior(), mesh.n_elements());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

// Load vector of f against the interior hat functions. `subdivide` levels of
// uniform refinement of the quadrature cells sharpen the integration of
// discontinuous data (indicator targets) without touching the dof layout.
inline Eigen::VectorXd assemble_load(const Mesh& mesh,
                                     const std::function<double(const Vec2&)>& f,
                                     int quad_order = 4, int subdivide = 0) {
  const TriRule rule = triangle_rule(quad_order);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.n_interior());
  struct Cell {
    Vec2 a, b, c;
  };
  for (int t = 0; t < mesh.n_elements(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    std::vector<Cell> cells = {{a, b, c}};
    for (int l = 0; l < subdivide; ++l) {
      std::vector<Cell> next;
      next.reserve(4 * cells.size());
      for (const auto& cl : cells) {
        const Vec2 m01 = 0.5 * (cl.a + cl.b), m12 = 0.5 * (cl.b + cl.c), m02 = 0.5 * (cl.a + cl.c);
        next.push_back({cl.a, m01, m02});
        next.push_back({m01, cl.b, m12});
        next.push_back({m02, m12, cl.c});
        next.push_back({m01, m12, m02});
      }
      cells = std::move(next);
    }
    const Eigen::Matrix2d F =
        (Eigen::Matrix2d() << (b - a).x(), (c - a).x(), (b - a).y(), (c - a).y()).finished();
    const Eigen::Matrix2d Finv = F.inverse();
    for (const auto& cl : cells) {
      const double J = std::abs(detail::cross2(cl.b - cl.a, cl.c - cl.a));
      for (const auto& q : rule.pts) {
        const Vec2 x = cl.a + q.u * (cl.b - cl.a) + q.v * (cl.c - cl.a);
        const Vec2 ref = Finv * (x - a);
        const double v = J * q.w * f(x);
        const double lam[3] = {1.0 - ref.x() - ref.y(), ref.x(), ref.y()};
        for (int k = 0; k < 3; ++k) {
          const int d = mesh.dof_of_vertex[tri[k]];
          if (d >= 0) load[d] += v * lam[k];
        }
      }
    }
  }
  return load;
}

// --- binary matrix dump (cross-run regression) -----------------------------
// layout: int64 dimension, double s, then row-major 64-bit entries.

inline void write_matrix_binary(std::ostream& os, const StiffnessMatrix& A) {
  const std::int64_t n = A.entries.rows();
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&A.s), sizeof A.s);
  for (std::int64_t i = 0; i < n; ++i)
    os.write(reinterpret_cast<const char*>(A.entries.row(i).eval().data()),
             static_cast<std::streamsize>(n * sizeof(double)));
}

inline StiffnessMatrix read_matrix_binary(std::istream& is) {
  std::int64_t n = 0;
  StiffnessMatrix A;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&A.s), sizeof A.s);
  if (!is || n < 0) throw std::runtime_error("read_matrix_binary: bad header");
  A.entries.resize(n, n);
  for (std::int64_t i = 0; i < n; ++i) {
    Eigen::VectorXd row(n);
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(n * sizeof(double)));
    A.entries.row(i) = row;
  }
  if (!is) throw std::runtime_error("read_matrix_binary: truncated data");
  return A;
}

}  // namespace fracopt
