#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/mixed_graph.hpp"

namespace lsem {

/// Edge weights Λ (Λ(u,v) for u -> v) and noise covariance Ω.
struct ParamSet {
  Matrix lambda;
  Matrix omega;
};

struct Covariance {
  enum class Provenance { exact, sample, perturbed };

  Matrix sigma;
  Provenance provenance = Provenance::exact;
  std::size_t samples = 0;  // set for sample provenance
  double gamma = 0.0;       // set for perturbed provenance

  static Covariance exact(Matrix s) { return {std::move(s), Provenance::exact, 0, 0.0}; }
  static Covariance sampled(Matrix s, std::size_t m) { return {std::move(s), Provenance::sample, m, 0.0}; }
  static Covariance perturbed(Matrix s, double g) { return {std::move(s), Provenance::perturbed, 0, g}; }

  [[nodiscard]] Index dim() const { return sigma.rows(); }
};

inline std::string provenance_name(Covariance::Provenance p) {
  switch (p) {
    case Covariance::Provenance::exact: return "exact";
    case Covariance::Provenance::sample: return "sample";
    case Covariance::Provenance::perturbed: return "perturbed";
  }
  return "unknown";
}

inline void require_square(const Matrix& m, std::size_t n, const char* what) {
  if (m.rows() != static_cast<Index>(n) || m.cols() != static_cast<Index>(n)) {
    throw ShapeError(std::string(what) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     ", expected " + std::to_string(n) + "x" + std::to_string(n));
  }
}

/// Λ must vanish off E and agree with every forced weight.
inline void check_lambda_pattern(const MixedGraph& g, const Matrix& lambda) {
  require_square(lambda, g.size(), "lambda");
  for (VertexId u = 0; u < g.size(); ++u) {
    for (VertexId v = 0; v < g.size(); ++v) {
      const double x = lambda(u, v);
      if (!g.has_directed(u, v)) {
        if (x != 0.0) {
          throw PatternError("lambda(" + std::to_string(u + 1) + "," + std::to_string(v + 1) +
                             ") is nonzero but the graph has no such directed edge");
        }
      } else if (auto w = g.forced_weight(u, v); w && std::abs(x - *w) > 1e-12 * std::max(1.0, std::abs(*w))) {
        throw PatternError("lambda(" + std::to_string(u + 1) + "," + std::to_string(v + 1) +
                           ") differs from its forced weight");
      }
    }
  }
}

/// Ω must be symmetric and vanish off the diagonal wherever F has no edge.
inline void check_omega_pattern(const MixedGraph& g, const Matrix& omega) {
  require_square(omega, g.size(), "omega");
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  for (VertexId a = 0; a < g.size(); ++a) {
    for (VertexId b = a + 1; b < g.size(); ++b) {
      if (std::abs(omega(a, b) - omega(b, a)) > 1e-12 * scale) throw PatternError("omega is not symmetric");
      if (!g.has_bidirected(a, b) && (omega(a, b) != 0.0 || omega(b, a) != 0.0)) {
        throw PatternError("omega(" + std::to_string(a + 1) + "," + std::to_string(b + 1) +
                           ") is nonzero but the graph has no such bidirected edge");
      }
    }
  }
}

/// (I - Λ)^{-1} as I + Λ + ... + Λ^{n-1}; stops as soon as a power vanishes.
inline Matrix neumann_inverse(const Matrix& lambda) {
  const Index n = lambda.rows();
  Matrix acc = Matrix::Identity(n, n);
  Matrix power = Matrix::Identity(n, n);
  for (Index i = 1; i < n; ++i) {
    power = power * lambda;
    if (power.isZero(0.0)) break;
    acc += power;
  }
  return acc;
}

/// Σ = (I - Λ)^{-T} Ω (I - Λ)^{-1}.
inline Covariance forward_map(const MixedGraph& g, const ParamSet& p) {
  topological_order(g);
  check_lambda_pattern(g, p.lambda);
  check_omega_pattern(g, p.omega);
  const Matrix om = symmetrize(p.omega);
  if (g.size() > 0 && min_eigenvalue(om) < -1e-12 * std::max(norm2(om), 1e-300)) {
    throw DefinitenessError("omega is not positive semidefinite");
  }
  const Matrix inv = neumann_inverse(p.lambda);
  return Covariance::exact(symmetrize(inv.transpose() * om * inv));
}

/// Ω̂ = (I - Λ)ᵀ Σ (I - Λ), without any pattern enforcement.
inline Matrix recover_omega(const MixedGraph& g, const Matrix& lambda, const Covariance& sigma) {
  require_square(lambda, g.size(), "lambda");
  require_square(sigma.sigma, g.size(), "sigma");
  const Matrix m = Matrix::Identity(lambda.rows(), lambda.cols()) - lambda;
  return m.transpose() * sigma.sigma * m;
}

inline Matrix project_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
}

/// Keeps the diagonal and the entries on F; zeroes the rest.
inline Matrix mask_pattern(const Matrix& a, const MixedGraph& g) {
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) out(i, i) = a(i, i);
  for (const auto& [x, y] : g.bidirected_edges()) {
    const Index i = static_cast<Index>(x);
    const Index j = static_cast<Index>(y);
    out(i, j) = a(i, j);
    out(j, i) = a(j, i);
  }
  return out;
}

struct ProjectionResult {
  Matrix omega;
  int iterations = 0;
};

/// Frobenius-nearest PSD matrix with the zero pattern of F (Dykstra's alternating projections
/// between the pattern subspace and the PSD cone). The result satisfies the pattern exactly
/// and positive semidefiniteness to `tol`.
inline ProjectionResult project_omega_pattern(const Matrix& omega_hat, const MixedGraph& g, double tol = 1e-10,
                                              int max_iters = 10000) {
  require_square(omega_hat, g.size(), "omega_hat");
  Matrix x = mask_pattern(symmetrize(omega_hat), g);
  Matrix correction = Matrix::Zero(x.rows(), x.cols());
  const double scale = std::max(1.0, x.norm());
  for (int it = 1; it <= max_iters; ++it) {
    const Matrix y = project_psd(x + correction);
    correction = x + correction - y;
    const Matrix next = mask_pattern(y, g);
    const double step = (next - x).norm();
    x = next;
    if (step < tol * scale && min_eigenvalue(x) >= -tol * scale) return {x, it};
  }
  throw ConvergenceError("pattern projection did not converge in " + std::to_string(max_iters) + " iterations", x);
}

/// Empirical covariance of the rows of X (mean-centred, divisor m - 1). With normalize_rows,
/// each nonzero observation row is first scaled to unit 2-norm.
inline Covariance sample_covariance(const Matrix& x, bool normalize_rows = false) {
  const Index m = x.rows();
  if (m < 2) throw SampleSizeError("sample covariance needs at least 2 observations, got " + std::to_string(m));
  Matrix data = x;
  if (normalize_rows) {
    for (Index i = 0; i < m; ++i) {
      const double nrm = data.row(i).norm();
      if (nrm > 0.0) data.row(i) /= nrm;
    }
  }
  const Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;
  Matrix s = (data.transpose() * data) / static_cast<double>(m - 1);
  return Covariance::sampled(symmetrize(s), static_cast<std::size_t>(m));
}

}  // namespace lsem
