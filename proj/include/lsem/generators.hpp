#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/mixed_graph.hpp"
#include "lsem/rng.hpp"

namespace lsem {

struct RandomGraphConfig {
  std::size_t n = 0;
  double p = 0.0;                     // directed edge probability along the permutation
  double extra_bidirected_p = 0.1;    // probability for each remaining non-adjacent pair
  std::size_t max_degree = 0;         // 0: uncapped; otherwise caps in- and out-degree
  std::size_t layers = 0;             // 0: permutation DAG; otherwise a layered DAG with this many layers
  std::uint64_t seed = 0;
};

struct GenerativeConfig {
  std::size_t n = 0;
  std::size_t k = 1;
  double mu = 20.0;
  std::size_t d = 1;
  double c_conc = 3.0;
  double d_min_constant = 1.0;
  bool strict = false;  // require d ≥ d_min(k, n)
  std::uint64_t seed = 0;
};

struct SDDNoiseConfig {
  double range = 1.0;
  std::uint64_t seed = 0;
};

inline void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

namespace detail {

inline void add_bidirected_edges(MixedGraph& g, double extra_p, Rng& rng) {
  const std::size_t n = g.size();
  std::bernoulli_distribution extra(extra_p);
  for (VertexId j = 0; j < n; ++j) {
    VertexList candidates;
    for (VertexId i = 0; i < n; ++i) {
      if (i != j && !g.adjacent_directed(i, j)) candidates.push_back(i);
    }
    if (candidates.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    g.add_bidirected(candidates[pick(rng)], j);
  }
  for (VertexId a = 0; a < n; ++a) {
    for (VertexId b = a + 1; b < n; ++b) {
      if (g.adjacent_directed(a, b) || g.has_bidirected(a, b)) continue;
      if (extra(rng)) g.add_bidirected(a, b);
    }
  }
}

// Permuted vertices split into near-equal consecutive groups; every vertex past the first
// group gets one parent in the previous group (so longest-path layers equal the groups), then
// each further consecutive-group pair is joined with probability p.
inline void add_layered_edges(MixedGraph& g, const VertexList& order, const RandomGraphConfig& cfg, Rng& rng) {
  const std::size_t n = order.size();
  const std::size_t layers = std::min(cfg.layers, n);
  std::vector<VertexList> groups(layers);
  for (std::size_t i = 0; i < n; ++i) groups[i * layers / n].push_back(order[i]);
  const std::size_t cap = cfg.max_degree == 0 ? n : cfg.max_degree;
  std::vector<std::size_t> outdeg(n, 0), indeg(n, 0);
  for (std::size_t l = 1; l < layers; ++l) {
    for (VertexId v : groups[l]) {
      VertexList open;
      for (VertexId u : groups[l - 1]) {
        if (outdeg[u] < cap) open.push_back(u);
      }
      if (open.empty()) {
        throw ConfigError("layer widths are incompatible with the degree cap");
      }
      std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
      const VertexId u = open[pick(rng)];
      g.add_directed(u, v);
      ++outdeg[u];
      ++indeg[v];
    }
  }
  std::bernoulli_distribution edge(cfg.p);
  for (std::size_t l = 1; l < layers; ++l) {
    for (VertexId u : groups[l - 1]) {
      for (VertexId v : groups[l]) {
        if (g.has_directed(u, v) || !edge(rng)) continue;
        if (outdeg[u] >= cap || indeg[v] >= cap) continue;
        g.add_directed(u, v);
        ++outdeg[u];
        ++indeg[v];
      }
    }
  }
}

}  // namespace detail

/// Random permutation π; i -> j with probability p whenever π(i) < π(j). Each vertex then
/// gets one bidirected edge to a uniformly chosen non-adjacent vertex (skipped if none), and
/// each other non-adjacent pair gets one with probability extra_bidirected_p. With `layers`
/// set, directed edges only join consecutive layers of a random layer assignment.
inline MixedGraph gen_random_bowfree_graph(const RandomGraphConfig& cfg) {
  check_probability(cfg.p, "p");
  check_probability(cfg.extra_bidirected_p, "extra_bidirected_p");
  Rng rng(derive_seed(cfg.seed, {stream::graph}));
  const std::size_t n = cfg.n;
  VertexList order(n);
  std::iota(order.begin(), order.end(), VertexId{0});
  std::shuffle(order.begin(), order.end(), rng);
  MixedGraph g(n);
  if (cfg.layers > 0) {
    detail::add_layered_edges(g, order, cfg, rng);
  } else {
    std::bernoulli_distribution edge(cfg.p);
    std::vector<std::size_t> indeg(n, 0), outdeg(n, 0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const VertexId i = order[a];
        const VertexId j = order[b];
        if (!edge(rng)) continue;
        if (cfg.max_degree != 0 && (outdeg[i] >= cfg.max_degree || indeg[j] >= cfg.max_degree)) continue;
        g.add_directed(i, j);
        ++outdeg[i];
        ++indeg[j];
      }
    }
  }
  detail::add_bidirected_edges(g, cfg.extra_bidirected_p, rng);
  return g;
}

/// ⌈c·k⁸·(ln n)⁴⌉, with values within float noise of an integer snapped to it.
inline std::size_t d_min(std::size_t k, double n, double c = 1.0) {
  if (!(n >= 2.0)) throw ConfigError("d_min needs n >= 2");
  const double x = c * std::pow(static_cast<double>(k), 8.0) * std::pow(std::log(n), 4.0);
  const double r = std::round(x);
  const double v = std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x)) ? r : std::ceil(x);
  return static_cast<std::size_t>(std::max(v, 1.0));
}

/// J(k, n) = k²·C_conc / d^{1/4}.
inline double concentration_j(std::size_t k, std::size_t d, double c_conc = 3.0) {
  return static_cast<double>(k * k) * c_conc / std::pow(static_cast<double>(d), 0.25);
}

inline void validate_generative(const GenerativeConfig& cfg) {
  if (cfg.n < 2) throw ConfigError("n must be at least 2");
  if (cfg.k == 0) throw ConfigError("k must be at least 1");
  if (cfg.d == 0) throw ConfigError("d must be at least 1");
  const double kk = static_cast<double>(cfg.k);
  if (cfg.mu < 10.0 * (kk + 1.0)) throw ConfigError("mu must satisfy mu >= 10(k+1)");
  const double nn = static_cast<double>(cfg.n);
  if (!(2.0 * kk * cfg.mu < nn * nn)) {
    throw ConfigError("weight interval is empty: need 2*k*mu < n^2 (1/n^2 < 1/(2k mu))");
  }
  if (cfg.strict && cfg.d < d_min(cfg.k, nn, cfg.d_min_constant)) {
    throw ConfigError("d = " + std::to_string(cfg.d) + " is below d_min = " +
                      std::to_string(d_min(cfg.k, nn, cfg.d_min_constant)));
  }
}

/// Weights i.i.d. from U[-1/(2kμ), 1/(2kμ)] minus [-1/n², 1/n²] by rejection; forced edges keep
/// their forced weight.
inline Matrix gen_lambda_uniform(const MixedGraph& g, const GenerativeConfig& cfg) {
  validate_generative(cfg);
  const double hi = 1.0 / (2.0 * static_cast<double>(cfg.k) * cfg.mu);
  const double lo = 1.0 / (static_cast<double>(cfg.n) * static_cast<double>(cfg.n));
  Rng rng(derive_seed(cfg.seed, {stream::lambda}));
  std::uniform_real_distribution<double> dist(-hi, hi);
  const auto n = static_cast<Index>(g.size());
  Matrix lambda = Matrix::Zero(n, n);
  for (const auto& e : g.sorted_directed_edges()) {
    double w = 0.0;
    if (e.forced_weight) {
      w = *e.forced_weight;
    } else {
      std::size_t tries = 0;
      do {
        if (++tries > 1000000) throw ConfigError("rejection sampling for edge weights exceeded 1e6 draws");
        w = dist(rng);
      } while (std::abs(w) <= lo);
    }
    lambda(static_cast<Index>(e.source), static_cast<Index>(e.target)) = w;
  }
  return lambda;
}

struct SphericalOmega {
  Matrix omega;
  Matrix vectors;  // d x n, column u is v_u
  std::size_t retries = 0;
};

inline Vector random_unit_vector(Rng& rng, Index d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    Vector x(d);
    for (Index i = 0; i < d; ++i) x(i) = normal(rng);
    const double nrm = x.norm();
    if (nrm > 0.0) return x / nrm;
  }
}

/// Unit vectors processed in topological order: each fresh uniform draw is projected onto the
/// orthogonal complement of its parents' final vectors and renormalized. Ω is their Gram
/// matrix with an exact unit diagonal and exact zeros on directed-adjacent pairs.
inline SphericalOmega gen_omega_spherical(const MixedGraph& g, const GenerativeConfig& cfg) {
  validate_generative(cfg);
  if (g.size() != cfg.n) throw ConfigError("graph size does not match n");
  const auto d = static_cast<Index>(cfg.d);
  const auto n = static_cast<Index>(g.size());
  Rng rng(derive_seed(cfg.seed, {stream::omega}));
  SphericalOmega out;
  out.vectors = Matrix::Zero(d, n);
  for (VertexId u : topological_order(g)) {
    const VertexList& pa = g.parents(u);
    Matrix q;
    if (!pa.empty()) {
      const Matrix basis = out.vectors(Eigen::all, to_index_list(pa));
      Eigen::HouseholderQR<Matrix> qr(basis);
      q = qr.householderQ() * Matrix::Identity(d, std::min<Index>(d, basis.cols()));
    }
    while (true) {
      Vector x = random_unit_vector(rng, d);
      if (q.size() > 0) x -= q * (q.transpose() * x);
      const double nrm = x.norm();
      if (nrm >= 1e-12) {
        out.vectors.col(static_cast<Index>(u)) = x / nrm;
        break;
      }
      if (++out.retries > 1000000) throw ConvergenceError("could not draw a vector off the parents' span");
    }
  }
  out.omega = symmetrize(out.vectors.transpose() * out.vectors);
  for (Index i = 0; i < n; ++i) out.omega(i, i) = 1.0;
  for (const auto& e : g.directed_edges()) {
    out.omega(static_cast<Index>(e.source), static_cast<Index>(e.target)) = 0.0;
    out.omega(static_cast<Index>(e.target), static_cast<Index>(e.source)) = 0.0;
  }
  return out;
}

/// N(0,1) on every bidirected pair; each diagonal entry is its row's absolute off-diagonal sum
/// plus an independent χ²₁ draw.
inline Matrix gen_omega_sdd(const MixedGraph& g, const SDDNoiseConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {stream::omega}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(1.0);
  const auto n = static_cast<Index>(g.size());
  Matrix omega = Matrix::Zero(n, n);
  for (const auto& [a, b] : g.bidirected_edges()) {
    const double x = normal(rng);
    omega(static_cast<Index>(a), static_cast<Index>(b)) = x;
    omega(static_cast<Index>(b), static_cast<Index>(a)) = x;
  }
  for (Index i = 0; i < n; ++i) omega(i, i) = omega.row(i).cwiseAbs().sum() + chi2(rng);
  return omega;
}

/// Weights uniform on [-range, range] for every unforced edge.
inline Matrix gen_lambda_range(const MixedGraph& g, const SDDNoiseConfig& cfg) {
  if (!(cfg.range > 0.0)) throw ConfigError("range must be positive");
  Rng rng(derive_seed(cfg.seed, {stream::lambda}));
  std::uniform_real_distribution<double> dist(-cfg.range, cfg.range);
  const auto n = static_cast<Index>(g.size());
  Matrix lambda = Matrix::Zero(n, n);
  for (const auto& e : g.sorted_directed_edges()) {
    lambda(static_cast<Index>(e.source), static_cast<Index>(e.target)) =
        e.forced_weight ? *e.forced_weight : dist(rng);
  }
  return lambda;
}

/// m draws from N(0, Σ) as rows: Z·Lᵀ with Σ = LLᵀ.
inline Matrix sample_observations(const Covariance& sigma, std::size_t m, std::uint64_t seed) {
  const Matrix& s = sigma.sigma;
  if (s.rows() != s.cols()) throw ShapeError("sigma must be square");
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw DefinitenessError("sigma is not positive definite (Cholesky failed)");
  Rng rng(derive_seed(seed, {stream::observations}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(static_cast<Index>(m), s.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
  }
  return z * Matrix(llt.matrixL()).transpose();
}

struct Model2Instance {
  MixedGraph graph;
  ParamSet params;
  Covariance sigma;
  SphericalOmega omega;
};

/// Layered DAG with in/out-degree at most k (layers of width about 2k), every non-adjacent pair
/// bidirected, Λ and Ω drawn per the generative model, and the exact covariance.
inline Model2Instance gen_model2_instance(const GenerativeConfig& cfg, double p = 0.5) {
  validate_generative(cfg);
  const std::size_t layers = std::max<std::size_t>(2, (cfg.n + 2 * cfg.k - 1) / (2 * cfg.k));
  RandomGraphConfig gc{cfg.n, p, 0.0, cfg.k, layers, cfg.seed};
  Model2Instance inst;
  inst.graph = with_saturated_bidirected(gen_random_bowfree_graph(gc));
  inst.params.lambda = gen_lambda_uniform(inst.graph, cfg);
  inst.omega = gen_omega_spherical(inst.graph, cfg);
  inst.params.omega = inst.omega.omega;
  inst.sigma = forward_map(inst.graph, inst.params);
  return inst;
}

/// ((1+μ)/μ)⁴ + (μ+1)²/(5μ²(μ-1)).
inline double model2_kappa0(double mu) {
  return std::pow((1.0 + mu) / mu, 4.0) + (mu + 1.0) * (mu + 1.0) / (5.0 * mu * mu * (mu - 1.0));
}

}  // namespace lsem
