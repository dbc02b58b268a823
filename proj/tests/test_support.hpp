#pragma once

#include <initializer_list>
#include <utility>

#include "lsem/lsem.hpp"

namespace lsem::test {

/// Graph from 1-based edge lists.
inline MixedGraph graph1(std::size_t n, std::initializer_list<std::pair<int, int>> dir,
                         std::initializer_list<std::pair<int, int>> bi = {}) {
  MixedGraph g(n);
  for (auto [u, v] : dir) g.add_directed(static_cast<VertexId>(u - 1), static_cast<VertexId>(v - 1));
  for (auto [u, v] : bi) g.add_bidirected(static_cast<VertexId>(u - 1), static_cast<VertexId>(v - 1));
  return g;
}

/// Dense inverse, independent of the Neumann sum.
inline Matrix dense_sigma(const Matrix& lambda, const Matrix& omega) {
  const Matrix inv = (Matrix::Identity(lambda.rows(), lambda.cols()) - lambda).inverse();
  return inv.transpose() * omega * inv;
}

struct Instance {
  MixedGraph g;
  ParamSet params;
  Covariance sigma;
};

/// Random bow-free graph with SDD noise and moderate weights.
inline Instance sdd_instance(std::size_t n, double p, std::uint64_t seed, double range = 0.8) {
  Instance inst;
  inst.g = gen_random_bowfree_graph({n, p, 0.2, 0, 0, seed});
  const SDDNoiseConfig nc{range, derive_seed(seed, {9})};
  inst.params = {gen_lambda_range(inst.g, nc), gen_omega_sdd(inst.g, nc)};
  inst.sigma = forward_map(inst.g, inst.params);
  return inst;
}

inline Matrix random_matrix(Rng& rng, Index r, Index c, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace lsem::test
