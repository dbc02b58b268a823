#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/mixed_graph.hpp"

namespace lsem {

enum class RowConvention {
  transform_all,  // every row of the system uses (I - Λ)ᵀΣ
  half_trek,      // row y is transformed iff y ∈ htr(v), raw Σ otherwise
};

struct RecoveryConfig {
  double sing_tol = 1e-10;
  RowConvention convention = RowConvention::transform_all;
  /// Explicit Y_v per vertex; vertices absent from the map use their free parents.
  std::map<VertexId, VertexList> y_sets;
};

/// Λ with a per-column flag: solved[v] means every weight into v is known.
struct PartialLambda {
  Matrix weights;
  std::vector<bool> solved;

  static PartialLambda empty_for(const MixedGraph& g) {
    const auto n = static_cast<Index>(g.size());
    PartialLambda p{Matrix::Zero(n, n), std::vector<bool>(g.size(), false)};
    for (const auto& e : g.directed_edges()) {
      if (e.forced_weight) p.weights(static_cast<Index>(e.source), static_cast<Index>(e.target)) = *e.forced_weight;
    }
    for (VertexId v = 0; v < g.size(); ++v) {
      if (g.free_parents(v).empty()) p.solved[v] = true;
    }
    return p;
  }

  /// Marks every column solved; used when Λ is fully known.
  static PartialLambda complete(const Matrix& lambda) {
    return {lambda, std::vector<bool>(static_cast<std::size_t>(lambda.cols()), true)};
  }
};

/// A·x = b for the free incoming weights of `vertex`.
struct RecoverySystem {
  VertexId vertex = 0;
  VertexList y_set;
  VertexList unknowns;           // free parents, column order of A
  std::vector<bool> transformed; // per row of A
  Matrix a;
  Vector b;
  bool partial_form = false;     // spa(v) = ∅ shortcut Σ_{pa,pa}⁻¹ Σ_{pa,v}
  bool convention_disagrees = false;
};

struct VertexDiagnostics {
  double residual = 0.0;
  double condition = 1.0;
  bool partial_form = false;
  bool convention_disagrees = false;
};

struct RecoveryResult {
  Matrix lambda_hat;
  std::map<VertexId, VertexDiagnostics> per_vertex;
  bool forced_edges_respected = true;
};

namespace detail {

// Rows of (I - Λ)ᵀΣ, memoised. A vertex whose incoming edges are all forced carries no
// noise of its own; its row is the forced combination of its parents' rows instead of 0.
class TransformedRows {
 public:
  TransformedRows(const MixedGraph& g, const Matrix& sigma, const PartialLambda& lam)
      : g_(g), sigma_(sigma), lam_(lam), cache_(g.size()) {}

  const Eigen::RowVectorXd& row(VertexId y, VertexId requester) {
    if (cache_[y]) return *cache_[y];
    if (g_.is_deterministic(y)) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(sigma_.cols());
      for (VertexId p : g_.parents(y)) r += *g_.forced_weight(p, y) * row(p, requester);
      cache_[y] = std::move(r);
      return *cache_[y];
    }
    if (!lam_.solved[y]) {
      throw OrderingError("system for vertex " + std::to_string(requester + 1) + " needs the weights into vertex " +
                          std::to_string(y + 1) + ", which are not recovered yet");
    }
    Eigen::RowVectorXd r = sigma_.row(static_cast<Index>(y));
    for (VertexId p : g_.parents(y)) {
      r -= lam_.weights(static_cast<Index>(p), static_cast<Index>(y)) * sigma_.row(static_cast<Index>(p));
    }
    cache_[y] = std::move(r);
    return *cache_[y];
  }

 private:
  const MixedGraph& g_;
  const Matrix& sigma_;
  const PartialLambda& lam_;
  std::vector<std::optional<Eigen::RowVectorXd>> cache_;
};

inline RecoverySystem build_system_impl(const MixedGraph& g, const Matrix& sigma, TransformedRows& rows, VertexId v,
                                        const RecoveryConfig& cfg) {
  RecoverySystem sys;
  sys.vertex = v;
  sys.unknowns = g.free_parents(v);
  const VertexList forced = g.forced_parents(v);
  auto it = cfg.y_sets.find(v);
  const bool explicit_y = it != cfg.y_sets.end();
  sys.y_set = explicit_y ? it->second : sys.unknowns;
  const std::size_t m = sys.unknowns.size();
  if (sys.y_set.size() != m) {
    throw ShapeError("Y set for vertex " + std::to_string(v + 1) + " has " + std::to_string(sys.y_set.size()) +
                     " entries, expected " + std::to_string(m));
  }
  for (VertexId y : sys.y_set) {
    if (y >= g.size()) throw StructuralError("Y set entry " + std::to_string(y + 1) + " out of range");
    if (y == v || g.has_bidirected(y, v)) {
      throw PatternError("Y set for vertex " + std::to_string(v + 1) + " contains vertex " + std::to_string(y + 1) +
                         ", which is the vertex itself or one of its siblings");
    }
  }
  sys.a.resize(static_cast<Index>(m), static_cast<Index>(m));
  sys.b.resize(static_cast<Index>(m));
  sys.transformed.assign(m, true);
  if (m == 0) return sys;

  const VertexList htr = half_trek_reachable(g, v);
  const auto cols = to_index_list(sys.unknowns);
  const auto vi = static_cast<Index>(v);
  sys.partial_form = !explicit_y && spa(g, v).empty() && forced.empty();
  for (std::size_t i = 0; i < m; ++i) {
    const VertexId y = sys.y_set[i];
    const bool in_htr = std::binary_search(htr.begin(), htr.end(), y);
    const bool use_transformed = cfg.convention == RowConvention::transform_all || in_htr;
    if (use_transformed != in_htr) sys.convention_disagrees = true;
    sys.transformed[i] = use_transformed;
    Eigen::RowVectorXd r = use_transformed ? rows.row(y, v) : Eigen::RowVectorXd(sigma.row(static_cast<Index>(y)));
    const auto ii = static_cast<Index>(i);
    sys.a.row(ii) = r(cols);
    double rhs = r(vi);
    for (VertexId f : forced) rhs -= *g.forced_weight(f, v) * r(static_cast<Index>(f));
    sys.b(ii) = rhs;
  }
  // With no grandparents the two row kinds coincide.
  if (sys.partial_form) sys.convention_disagrees = false;
  return sys;
}

}  // namespace detail

inline RecoverySystem build_system(const MixedGraph& g, const Covariance& sigma, const PartialLambda& lambda_partial,
                                   VertexId v, const RecoveryConfig& cfg = {}) {
  require_square(sigma.sigma, g.size(), "sigma");
  require_square(lambda_partial.weights, g.size(), "lambda_partial");
  if (v >= g.size()) throw StructuralError("vertex " + std::to_string(v + 1) + " out of range");
  detail::TransformedRows rows(g, sigma.sigma, lambda_partial);
  return detail::build_system_impl(g, sigma.sigma, rows, v, cfg);
}

/// Solves A·x = b by full-pivot LU after rejecting A with σ_min < sing_tol·‖A‖.
inline Vector recover_vertex(const RecoverySystem& sys, double sing_tol = 1e-10) {
  if (sys.a.rows() != sys.a.cols() || sys.a.rows() != sys.b.size()) {
    throw ShapeError("recovery system for vertex " + std::to_string(sys.vertex + 1) + " is not square");
  }
  if (sys.a.size() == 0) return Vector(0);
  const double smax = norm2(sys.a);
  const double smin = min_singular_value(sys.a);
  if (smax == 0.0 || smin < sing_tol * smax) {
    throw NearSingularError(sys.vertex, "system for vertex " + std::to_string(sys.vertex + 1) +
                                            " is near-singular (sigma_min/sigma_max = " +
                                            std::to_string(smax == 0.0 ? 0.0 : smin / smax) + ")");
  }
  return sys.a.fullPivLu().solve(sys.b);
}

/// Σ_{pa,pa}⁻¹ Σ_{pa,v} for a vertex without grandparents.
inline Vector recover_first_layers(const MixedGraph& g, const Covariance& sigma, VertexId v, double sing_tol = 1e-10) {
  require_square(sigma.sigma, g.size(), "sigma");
  if (!spa(g, v).empty()) {
    throw OrderingError("vertex " + std::to_string(v + 1) + " has grandparents; use the general system");
  }
  RecoverySystem sys;
  sys.vertex = v;
  sys.unknowns = g.free_parents(v);
  sys.y_set = sys.unknowns;
  sys.partial_form = true;
  const auto idx = to_index_list(sys.unknowns);
  sys.a = sigma.sigma(idx, idx);
  sys.b = sigma.sigma(idx, static_cast<Index>(v));
  for (VertexId f : g.forced_parents(v)) sys.b -= *g.forced_weight(f, v) * sigma.sigma(idx, static_cast<Index>(f));
  return recover_vertex(sys, sing_tol);
}

/// Recovers every weight layer by layer. Forced edges are copied verbatim.
inline RecoveryResult recover_all(const MixedGraph& g, const Covariance& sigma, const RecoveryConfig& cfg = {}) {
  require_bow_free(g);
  require_square(sigma.sigma, g.size(), "sigma");
  const auto layers = layer_decomposition(g);
  PartialLambda lam = PartialLambda::empty_for(g);
  const Matrix s = symmetrize(sigma.sigma);
  detail::TransformedRows rows(g, s, lam);
  RecoveryResult res;
  for (const auto& [layer, verts] : layers.layers) {
    for (VertexId v : verts) {
      if (g.parents(v).empty()) continue;
      RecoverySystem sys = detail::build_system_impl(g, s, rows, v, cfg);
      VertexDiagnostics diag;
      diag.partial_form = sys.partial_form;
      diag.convention_disagrees = sys.convention_disagrees;
      if (sys.a.size() > 0) {
        const Vector x = recover_vertex(sys, cfg.sing_tol);
        for (std::size_t i = 0; i < sys.unknowns.size(); ++i) {
          lam.weights(static_cast<Index>(sys.unknowns[i]), static_cast<Index>(v)) = x(static_cast<Index>(i));
        }
        diag.residual = (sys.a * x - sys.b).norm();
        diag.condition = condition_number(sys.a);
      }
      lam.solved[v] = true;
      res.per_vertex[v] = diag;
    }
  }
  for (const auto& e : g.directed_edges()) {
    if (e.forced_weight && lam.weights(static_cast<Index>(e.source), static_cast<Index>(e.target)) != *e.forced_weight) {
      res.forced_edges_respected = false;
    }
  }
  res.lambda_hat = std::move(lam.weights);
  return res;
}

/// (Λ̂, Ω̂): recovered weights, then (I - Λ̂)ᵀΣ(I - Λ̂) projected onto the pattern of F.
inline ParamSet recover_full_params(const MixedGraph& g, const Covariance& sigma, const RecoveryConfig& cfg = {},
                                    double proj_tol = 1e-10, int proj_max_iters = 10000) {
  RecoveryResult r = recover_all(g, sigma, cfg);
  const Matrix om = recover_omega(g, r.lambda_hat, sigma);
  return {std::move(r.lambda_hat), project_omega_pattern(om, g, proj_tol, proj_max_iters).omega};
}

}  // namespace lsem
