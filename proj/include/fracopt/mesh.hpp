#pragma once

// Conforming triangulations of the unit disc and of the L-shaped domain
// [0,2]^2 \ [1,2]^2, either quasi-uniform or graded toward the boundary:
// given a mesh parameter h and a grading exponent mu in [1,2], element sizes
// follow
//   h_T ~ h^mu                          for elements touching the boundary,
//   h_T ~ h * dist(T, boundary)^((mu-1)/mu)   otherwise.
//
// The disc is built from concentric vertex rings (ring spacing set by the
// grading law, angular counts chosen to keep elements isotropic) joined by
// strip triangulations; the L-shape is block-structured. Both constructions
// are deterministic functions of (h, mu).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracopt {

using Vec2 = Eigen::Vector2d;

enum class Domain { disc, lshape };

enum class PairClass { identical, edge_adjacent, vertex_adjacent, disjoint };

struct GradingSpec {
  double h = 1.0;
  double mu = 1.0;
};

struct MeshLimits {
  double sigma_max = 5.0;            // bound on h_T / rho_T
  double quasi_uniform_ratio = 4.0;  // bound on max h_T / min h_T when mu = 1
};

struct Mesh {
  Domain domain = Domain::disc;
  GradingSpec grading;

  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<std::uint8_t> boundary_vertex;

  double h_max = 0.0;
  double shape_coeff = 0.0;  // max over T of h_T / rho_T

  // per-element metadata
  std::vector<double> elem_area;
  std::vector<double> elem_diam;
  std::vector<double> elem_dist;  // barycenter distance to the true boundary

  // homogeneous Dirichlet dof numbering: interior vertices only
  std::vector<int> dof_of_vertex;  // -1 on the boundary
  std::vector<int> interior_vertices;

  [[nodiscard]] int n_vertices() const { return static_cast<int>(vertices.size()); }
  [[nodiscard]] int n_elements() const { return static_cast<int>(triangles.size()); }
  [[nodiscard]] int n_interior() const { return static_cast<int>(interior_vertices.size()); }

  [[nodiscard]] Vec2 barycenter(int t) const {
    const auto& tr = triangles[t];
    return (vertices[tr[0]] + vertices[tr[1]] + vertices[tr[2]]) / 3.0;
  }
  [[nodiscard]] double total_area() const {
    double a = 0.0;
    for (double v : elem_area) a += v;
    return a;
  }
};

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * cross2(b - a, c - a);
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline const std::array<std::pair<Vec2, Vec2>, 6>& lshape_boundary_segments() {
  static const std::array<std::pair<Vec2, Vec2>, 6> segs = {{
      {{0.0, 0.0}, {2.0, 0.0}},
      {{2.0, 0.0}, {2.0, 1.0}},
      {{2.0, 1.0}, {1.0, 1.0}},
      {{1.0, 1.0}, {1.0, 2.0}},
      {{1.0, 2.0}, {0.0, 2.0}},
      {{0.0, 2.0}, {0.0, 0.0}},
  }};
  return segs;
}

}  // namespace detail

// Distance from a point inside Omega to the true boundary curve.
inline double boundary_distance(Domain domain, const Vec2& p) {
  if (domain == Domain::disc) return std::abs(1.0 - p.norm());
  double d = std::numeric_limits<double>::max();
  for (const auto& [a, b] : detail::lshape_boundary_segments())
    d = std::min(d, detail::point_segment_distance(p, a, b));
  return d;
}

namespace detail {

// Metadata, dof numbering, and the structural invariants shared by all
// generated meshes. Throws on violation.
inline void finalize_mesh(Mesh& m, const MeshLimits& lim) {
  const int nv = m.n_vertices();
  const int nt = m.n_elements();
  if (nv < 3 || nt < 1) throw std::runtime_error("mesh: empty triangulation");

  m.elem_area.resize(nt);
  m.elem_diam.resize(nt);
  m.elem_dist.resize(nt);
  m.h_max = 0.0;
  m.shape_coeff = 0.0;

  for (int t = 0; t < nt; ++t) {
    const auto& tr = m.triangles[t];
    for (int k : tr)
      if (k < 0 || k >= nv) throw std::runtime_error("mesh: vertex index out of range");
    const Vec2 &a = m.vertices[tr[0]], &b = m.vertices[tr[1]], &c = m.vertices[tr[2]];
    const double area = signed_area(a, b, c);
    if (!(area > 0.0)) throw std::runtime_error("mesh: non-positive triangle area");
    const double e0 = (b - a).norm(), e1 = (c - b).norm(), e2 = (a - c).norm();
    const double diam = std::max({e0, e1, e2});
    const double perimeter = e0 + e1 + e2;
    // rho_T = diameter of the inscribed ball = 4 * area / perimeter
    const double rho = 4.0 * area / perimeter;
    m.elem_area[t] = area;
    m.elem_diam[t] = diam;
    m.elem_dist[t] = boundary_distance(m.domain, m.barycenter(t));
    m.h_max = std::max(m.h_max, diam);
    m.shape_coeff = std::max(m.shape_coeff, diam / rho);
  }
  if (m.shape_coeff > lim.sigma_max)
    throw std::runtime_error("mesh: shape coefficient " + std::to_string(m.shape_coeff) +
                             " exceeds sigma_max " + std::to_string(lim.sigma_max));

  // conformity: every undirected edge belongs to at most two triangles,
  // and edges on exactly one triangle lie on the boundary
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tr : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      int i = tr[e], j = tr[(e + 1) % 3];
      if (i > j) std::swap(i, j);
      ++edge_count[{i, j}];
    }
  }
  const double tol = 1e-12 * std::max(m.h_max, 1.0);
  for (const auto& [edge, cnt] : edge_count) {
    if (cnt > 2) throw std::runtime_error("mesh: non-conforming edge");
    if (cnt == 1) {
      if (boundary_distance(m.domain, m.vertices[edge.first]) > tol ||
          boundary_distance(m.domain, m.vertices[edge.second]) > tol)
        throw std::runtime_error("mesh: boundary edge with interior endpoint");
    }
  }

  m.boundary_vertex.assign(nv, 0);
  for (int i = 0; i < nv; ++i)
    m.boundary_vertex[i] = boundary_distance(m.domain, m.vertices[i]) <= tol ? 1 : 0;

  m.dof_of_vertex.assign(nv, -1);
  m.interior_vertices.clear();
  for (int i = 0; i < nv; ++i) {
    if (!m.boundary_vertex[i]) {
      m.dof_of_vertex[i] = static_cast<int>(m.interior_vertices.size());
      m.interior_vertices.push_back(i);
    }
  }

  if (m.grading.mu == 1.0) {
    double dmin = std::numeric_limits<double>::max(), dmax = 0.0;
    for (double d : m.elem_diam) {
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    if (dmax / dmin > lim.quasi_uniform_ratio)
      throw std::runtime_error("mesh: quasi-uniformity ratio " + std::to_string(dmax / dmin) +
                               " exceeds " + std::to_string(lim.quasi_uniform_ratio));
  }
}

// Triangulate the annulus strip between two concentric closed vertex rings.
// ring entries: (vertex id, angle); angles ascending within [off, off+2pi).
struct RingRef {
  const std::vector<int>* ids;
  double offset;
  [[nodiscard]] int n() const { return static_cast<int>(ids->size()); }
  [[nodiscard]] double angle(int i) const {
    return offset + 2.0 * std::numbers::pi * static_cast<double>(i) / n();
  }
  [[nodiscard]] int id(int i) const { return (*ids)[i % n()]; }
};

inline void triangulate_strip(const RingRef& outer, const RingRef& inner,
                              std::vector<std::array<int, 3>>& tris) {
  int i = 0, j = 0;
  const int nP = outer.n(), nQ = inner.n();
  while (i < nP || j < nQ) {
    const bool can_p = i < nP, can_q = j < nQ;
    const bool advance_p = can_p && (!can_q || outer.angle(i + 1) <= inner.angle(j + 1));
    if (advance_p) {
      tris.push_back({outer.id(i), outer.id(i + 1), inner.id(j)});
      ++i;
    } else {
      tris.push_back({outer.id(i), inner.id(j + 1), inner.id(j)});
      ++j;
    }
  }
}

}  // namespace detail

// Quasi-uniform (mu = 1) or boundary-graded (mu in (1,2]) mesh of the unit
// disc. Boundary vertices are snapped to |x| = 1.
inline Mesh build_disc_mesh(const GradingSpec& spec, const MeshLimits& lim = {}) {
  const double h = spec.h, mu = spec.mu;
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("build_disc_mesh: need 0 < h <= 1");
  if (!(mu >= 1.0 && mu <= 2.0)) throw std::invalid_argument("build_disc_mesh: need 1 <= mu <= 2");

  // ring radii, outermost first
  std::vector<double> radii;
  radii.push_back(1.0);
  if (mu == 1.0) {
    const int rings = std::max(1, static_cast<int>(std::lround(1.0 / h)));
    for (int k = 1; k < rings; ++k)
      radii.push_back(1.0 - static_cast<double>(k) / rings);
  } else {
    double r = 1.0;
    while (true) {
      const double d = 1.0 - r;
      const double delta = std::max(std::pow(h, mu), h * std::pow(d, (mu - 1.0) / mu));
      const double d_next = d + delta;
      const double delta_next = std::max(std::pow(h, mu), h * std::pow(d_next, (mu - 1.0) / mu));
      if (r - delta < 0.55 * delta_next) break;  // remaining core becomes the center fan
      r -= delta;
      radii.push_back(r);
    }
  }

  Mesh m;
  m.domain = Domain::disc;
  m.grading = spec;

  // angular count per ring, matched to the local radial band thickness
  const int nrings = static_cast<int>(radii.size());
  std::vector<std::vector<int>> ring_ids(nrings);
  std::vector<double> ring_offset(nrings);
  for (int k = 0; k < nrings; ++k) {
    const double band = (k + 1 < nrings) ? (radii[k] - radii[k + 1])
                                         : radii[k];  // innermost: distance to the center
    const double band_out = (k > 0) ? (radii[k - 1] - radii[k]) : band;
    // elements slightly wider than tall; keeps N h^2 within |log h| bounds
    const double target = 1.45 * 0.5 * (band + band_out);
    const int n = std::max(6, static_cast<int>(std::lround(2.0 * std::numbers::pi * radii[k] / target)));
    ring_offset[k] = (k % 2) ? std::numbers::pi / n : 0.0;
    ring_ids[k].resize(n);
    for (int i = 0; i < n; ++i) {
      const double th = ring_offset[k] + 2.0 * std::numbers::pi * i / n;
      ring_ids[k][i] = m.n_vertices();
      m.vertices.emplace_back(radii[k] * std::cos(th), radii[k] * std::sin(th));
    }
  }
  const int center = m.n_vertices();
  m.vertices.emplace_back(0.0, 0.0);

  for (int k = 0; k + 1 < nrings; ++k) {
    detail::RingRef outer{&ring_ids[k], ring_offset[k]};
    detail::RingRef inner{&ring_ids[k + 1], ring_offset[k + 1]};
    detail::triangulate_strip(outer, inner, m.triangles);
  }
  {
    const auto& last = ring_ids[nrings - 1];
    const int n = static_cast<int>(last.size());
    for (int i = 0; i < n; ++i)
      m.triangles.push_back({center, last[i], last[(i + 1) % n]});
  }

  detail::finalize_mesh(m, lim);
  return m;
}

// Quasi-uniform block-structured mesh of [0,2]^2 \ [1,2]^2. The reentrant
// corner (1,1) is always a mesh vertex.
inline Mesh build_lshape_mesh(double h, const MeshLimits& lim = {}) {
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("build_lshape_mesh: need 0 < h <= 1");
  const int n = std::max(1, static_cast<int>(std::lround(1.0 / h)));
  const double g = 1.0 / n;

  Mesh m;
  m.domain = Domain::lshape;
  m.grading = GradingSpec{h, 1.0};

  // vertices of the (2n+1)^2 lattice that belong to the L
  std::vector<int> vid(static_cast<std::size_t>(2 * n + 1) * (2 * n + 1), -1);
  auto lat = [&](int i, int j) -> int& { return vid[static_cast<std::size_t>(j) * (2 * n + 1) + i]; };
  auto in_domain_cell = [&](int ci, int cj) { return ci < n || cj < n; };

  for (int cj = 0; cj < 2 * n; ++cj)
    for (int ci = 0; ci < 2 * n; ++ci) {
      if (!in_domain_cell(ci, cj)) continue;
      for (int dj = 0; dj <= 1; ++dj)
        for (int di = 0; di <= 1; ++di) {
          int& id = lat(ci + di, cj + dj);
          if (id < 0) {
            id = m.n_vertices();
            m.vertices.emplace_back((ci + di) * g, (cj + dj) * g);
          }
        }
    }
  for (int cj = 0; cj < 2 * n; ++cj)
    for (int ci = 0; ci < 2 * n; ++ci) {
      if (!in_domain_cell(ci, cj)) continue;
      const int v00 = lat(ci, cj), v10 = lat(ci + 1, cj);
      const int v01 = lat(ci, cj + 1), v11 = lat(ci + 1, cj + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }

  detail::finalize_mesh(m, lim);
  return m;
}

inline PairClass classify_pair(const Mesh& m, int t1, int t2) {
  if (t1 < 0 || t1 >= m.n_elements() || t2 < 0 || t2 >= m.n_elements())
    throw std::invalid_argument("classify_pair: element id out of range");
  if (t1 == t2) return PairClass::identical;
  int shared = 0;
  for (int a : m.triangles[t1])
    for (int b : m.triangles[t2])
      if (a == b) ++shared;
  switch (shared) {
    case 0: return PairClass::disjoint;
    case 1: return PairClass::vertex_adjacent;
    case 2: return PairClass::edge_adjacent;
    default: throw std::runtime_error("classify_pair: distinct elements share 3 vertices");
  }
}

// --- plain-text serialization (golden-file regression format) -------------
// header `nv nt`, then nv lines `x y boundary_flag`, then nt lines `i j k`.

inline void write_mesh(std::ostream& os, const Mesh& m) {
  os << m.n_vertices() << ' ' << m.n_elements() << '\n';
  char buf[96];
  for (int i = 0; i < m.n_vertices(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %d\n", m.vertices[i].x(), m.vertices[i].y(),
                  static_cast<int>(m.boundary_vertex[i]));
    os << buf;
  }
  for (const auto& t : m.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline Mesh read_mesh(std::istream& is, Domain domain, const MeshLimits& lim = {}) {
  int nv = 0, nt = 0;
  if (!(is >> nv >> nt)) throw std::runtime_error("read_mesh: bad header");
  Mesh m;
  m.domain = domain;
  m.vertices.resize(nv);
  for (int i = 0; i < nv; ++i) {
    int flag;
    if (!(is >> m.vertices[i].x() >> m.vertices[i].y() >> flag))
      throw std::runtime_error("read_mesh: bad vertex line");
  }
  m.triangles.resize(nt);
  for (int t = 0; t < nt; ++t)
    if (!(is >> m.triangles[t][0] >> m.triangles[t][1] >> m.triangles[t][2]))
      throw std::runtime_error("read_mesh: bad triangle line");
  detail::finalize_mesh(m, lim);
  return m;
}

// --- point location --------------------------------------------------------

inline std::array<double, 3> barycentric(const Mesh& m, int t, const Vec2& p) {
  const auto& tr = m.triangles[t];
  const Vec2 &a = m.vertices[tr[0]], &b = m.vertices[tr[1]], &c = m.vertices[tr[2]];
  const double area = detail::signed_area(a, b, c);
  return {detail::signed_area(p, b, c) / area, detail::signed_area(a, p, c) / area,
          detail::signed_area(a, b, p) / area};
}

class PointLocator {
 public:
  explicit PointLocator(const Mesh& m) : mesh_(&m) {
    lo_ = Vec2(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
    hi_ = -lo_;
    for (const auto& v : m.vertices) {
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
    }
    const int nt = m.n_elements();
    nx_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(nt))));
    ny_ = nx_;
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (int t = 0; t < nt; ++t) {
      Vec2 tlo = m.vertices[m.triangles[t][0]], thi = tlo;
      for (int k = 1; k < 3; ++k) {
        tlo = tlo.cwiseMin(m.vertices[m.triangles[t][k]]);
        thi = thi.cwiseMax(m.vertices[m.triangles[t][k]]);
      }
      const auto [i0, j0] = cell_of(tlo);
      const auto [i1, j1] = cell_of(thi);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
          cells_[static_cast<std::size_t>(j) * nx_ + i].push_back(t);
    }
  }

  // element containing p, or -1
  [[nodiscard]] int locate(const Vec2& p, double tol = 1e-10) const {
    const auto [i, j] = cell_of(p);
    int best = -1;
    double best_min = -std::numeric_limits<double>::max();
    for (int t : cells_[static_cast<std::size_t>(j) * nx_ + i]) {
      const auto l = barycentric(*mesh_, t, p);
      const double mn = std::min({l[0], l[1], l[2]});
      if (mn > best_min) {
        best_min = mn;
        best = t;
      }
    }
    return (best >= 0 && best_min >= -tol) ? best : -1;
  }

 private:
  [[nodiscard]] std::pair<int, int> cell_of(const Vec2& p) const {
    const Vec2 span = hi_ - lo_;
    int i = static_cast<int>((p.x() - lo_.x()) / std::max(span.x(), 1e-300) * nx_);
    int j = static_cast<int>((p.y() - lo_.y()) / std::max(span.y(), 1e-300) * ny_);
    return {std::clamp(i, 0, nx_ - 1), std::clamp(j, 0, ny_ - 1)};
  }

  const Mesh* mesh_;
  Vec2 lo_, hi_;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace fracopt
