#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace lsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct NormReport {
  enum class Method { exact_svd, power_iteration };

  double value = 0.0;
  Method method = Method::exact_svd;
  int iterations = 0;
  double tolerance = 0.0;
  bool converged = true;
};

/// Dimension above which spectral_norm switches from a full SVD to power iteration.
inline constexpr Index kExactSvdMaxDim = 64;

/// Largest singular value. Exact SVD for small matrices; power iteration on AᵀA above
/// kExactSvdMaxDim, stopping when the Rayleigh quotient settles to `tol` relative.
inline NormReport spectral_norm(const Matrix& a, double tol = 1e-10, int max_iters = 20000) {
  NormReport rep;
  if (a.size() == 0) return rep;
  if (std::max(a.rows(), a.cols()) <= kExactSvdMaxDim) {
    Eigen::JacobiSVD<Matrix> svd(a);
    rep.value = svd.singularValues()(0);
    return rep;
  }
  rep.method = NormReport::Method::power_iteration;
  rep.tolerance = tol;
  const Matrix gram = a.transpose() * a;
  Vector x = Vector::Ones(gram.cols());
  // Break symmetry so that the start vector is not orthogonal to the top eigenvector.
  for (Index i = 0; i < x.size(); ++i) x(i) += 1e-3 * static_cast<double>(i % 7);
  x.normalize();
  double prev = 0.0;
  rep.converged = false;
  for (int it = 1; it <= max_iters; ++it) {
    Vector y = gram * x;
    const double rq = x.dot(y);
    const double ny = y.norm();
    rep.iterations = it;
    if (ny == 0.0) {
      rep.value = 0.0;
      rep.converged = true;
      return rep;
    }
    x = y / ny;
    if (it > 1 && std::abs(rq - prev) <= std::max(tol * tol, 1e-15) * std::abs(rq)) {
      rep.value = std::sqrt(std::max(rq, 0.0));
      rep.converged = true;
      return rep;
    }
    prev = rq;
  }
  rep.value = std::sqrt(std::max(prev, 0.0));
  return rep;
}

inline double norm2(const Matrix& a) { return spectral_norm(a).value; }

inline double min_singular_value(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// 2-norm condition number σ₁/σₙ; +inf for singular input, 1 for empty input.
inline double condition_number(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Positive definite within the scale-invariant floor min λ > rel_floor·‖A‖.
inline bool is_positive_definite(const Matrix& symmetric, double rel_floor = 1e-12) {
  if (symmetric.size() == 0) return true;
  return min_eigenvalue(symmetric) > rel_floor * norm2(symmetric);
}

using IndexList = std::vector<Index>;

template <typename Range>
IndexList to_index_list(const Range& r) {
  IndexList out;
  out.reserve(r.size());
  for (auto v : r) out.push_back(static_cast<Index>(v));
  return out;
}

/// Sub-matrix A[rows, cols]; empty index lists give an empty matrix of the right shape.
template <typename R, typename C>
Matrix submatrix(const Matrix& a, const R& rows, const C& cols) {
  return a(to_index_list(rows), to_index_list(cols));
}

}  // namespace lsem
