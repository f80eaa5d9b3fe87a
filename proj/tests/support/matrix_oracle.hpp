#pragma once

// Full stiffness-matrix oracle: element-pair sums through PairOracle plus an
// independently integrated complement term (uniform 4^L element subdivision
// instead of the production single elevated-order rule).

#include "support/pair_oracle.hpp"

#include "fracopt/assembly.hpp"

#include <Eigen/Dense>

namespace fracopt::testing {

inline Eigen::MatrixXd oracle_matrix(const Mesh& mesh, double s, int depth, int gauss_n = 5,
                                     int complement_split = 2) {
  const int N = mesh.n_interior();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  const double cns = normalization_constant(2, s);

  const int nt = mesh.n_elements();
  for (int t1 = 0; t1 < nt; ++t1) {
    for (int t2 = t1; t2 < nt; ++t2) {
      const auto& tri1 = mesh.triangles[t1];
      const auto& tri2 = mesh.triangles[t2];
      // union of pair vertices with local slots
      std::vector<int> gids;
      std::vector<std::pair<int, int>> slots;
      for (int k = 0; k < 3; ++k) {
        gids.push_back(tri1[k]);
        slots.emplace_back(k, -1);
      }
      for (int k = 0; k < 3; ++k) {
        bool found = false;
        for (std::size_t i = 0; i < gids.size(); ++i)
          if (gids[i] == tri2[k]) {
            slots[i].second = k;
            found = true;
            break;
          }
        if (!found) {
          gids.push_back(tri2[k]);
          slots.emplace_back(-1, k);
        }
      }
      Tri A1{mesh.vertices[tri1[0]], mesh.vertices[tri1[1]], mesh.vertices[tri1[2]]};
      Tri A2{mesh.vertices[tri2[0]], mesh.vertices[tri2[1]], mesh.vertices[tri2[2]]};
      const PairOracle oracle(A1, A2, slots, s, depth, gauss_n);
      const Eigen::MatrixXd C = oracle.compute();
      const double factor = (t1 == t2 ? 1.0 : 2.0) * 0.5 * cns;
      for (std::size_t i = 0; i < gids.size(); ++i) {
        const int di = mesh.dof_of_vertex[gids[i]];
        if (di < 0) continue;
        for (std::size_t j = 0; j < gids.size(); ++j) {
          const int dj = mesh.dof_of_vertex[gids[j]];
          if (dj >= 0) A(di, dj) += factor * C(i, j);
        }
      }
    }
  }

  // complement: C(n,s) int_T phi_a phi_b omega_s on 4^L uniform children
  const TriRule rule = triangle_rule(5);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    std::vector<Tri> cells = {
        Tri{mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]}};
    for (int l = 0; l < complement_split; ++l) {
      std::vector<Tri> next;
      for (const auto& c : cells) {
        const Vec2 m01 = 0.5 * (c[0] + c[1]), m12 = 0.5 * (c[1] + c[2]), m02 = 0.5 * (c[0] + c[2]);
        next.push_back({c[0], m01, m02});
        next.push_back({m01, c[1], m12});
        next.push_back({m02, m12, c[2]});
        next.push_back({m01, m12, m02});
      }
      cells = std::move(next);
    }
    // P1 hat functions of the parent element as physical linear polynomials
    Eigen::Matrix3d M;
    for (int r = 0; r < 3; ++r)
      M.row(r) << mesh.vertices[tri[r]].x(), mesh.vertices[tri[r]].y(), 1.0;
    const Eigen::Matrix3d Cinv = M.inverse();
    double loc[3][3] = {};
    for (const auto& c : cells) {
      const double J = std::abs(detail::cross2(c[1] - c[0], c[2] - c[0]));
      for (const auto& q : rule.pts) {
        const Vec2 x = c[0] + q.u * (c[1] - c[0]) + q.v * (c[2] - c[0]);
        const double om = weight_omega_s(x, mesh.domain, s);
        double lam[3];
        for (int k = 0; k < 3; ++k)
          lam[k] = Cinv(0, k) * x.x() + Cinv(1, k) * x.y() + Cinv(2, k);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) loc[i][j] += J * q.w * om * lam[i] * lam[j];
      }
    }
    for (int i = 0; i < 3; ++i) {
      const int di = mesh.dof_of_vertex[tri[i]];
      if (di < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = mesh.dof_of_vertex[tri[j]];
        if (dj >= 0) A(di, dj) += cns * loc[i][j];
      }
    }
  }
  return A;
}

}  // namespace fracopt::testing
