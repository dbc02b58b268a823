#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/mixed_graph.hpp"
#include "lsem/recovery.hpp"
#include "lsem/rng.hpp"

namespace lsem {

/// Rel(A, B) = max over A(i,j) != 0 of |A(i,j) - B(i,j)| / |A(i,j)|. Not symmetric.
inline double relative_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative distance needs equal shapes");
  double best = 0.0;
  bool any = false;
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      const double x = a(i, j);
      if (x == 0.0) continue;
      any = true;
      best = std::max(best, std::abs(x - b(i, j)) / std::abs(x));
    }
  }
  if (!any) throw UndefinedDistanceError("relative distance is undefined: reference matrix is identically zero");
  return best;
}

struct PerturbationSpec {
  double gamma = 0.0;
  std::size_t k = 1;
  std::uint64_t seed = 0;
  bool enforce_tight = false;
  /// Permits γ ≥ n⁻⁴ (experiment mode); the formal model requires γ < n⁻⁴.
  bool allow_large_gamma = false;
};

inline void validate_perturbation(const PerturbationSpec& spec, std::size_t n) {
  if (!(spec.gamma > 0.0) || !std::isfinite(spec.gamma)) throw SpecError("gamma must be positive and finite");
  if (spec.k == 0) throw SpecError("k must be at least 1");
  const double cap = std::pow(static_cast<double>(std::max<std::size_t>(n, 1)), -4.0);
  if (!spec.allow_large_gamma && spec.gamma >= cap) {
    throw SpecError("gamma = " + std::to_string(spec.gamma) + " is not below n^-4 = " + std::to_string(cap));
  }
}

/// Σ̃ = Σ + ε with ε symmetric and |ε(i,j)| ≤ (γ/√k)|Σ(i,j)|, drawn uniformly per upper-triangular
/// entry. With enforce_tight the entry of largest |Σ| gets ε = +(γ/√k)Σ exactly.
inline Covariance sample_perturbation(const Covariance& sigma, const PerturbationSpec& spec) {
  const Matrix& s = sigma.sigma;
  validate_perturbation(spec, static_cast<std::size_t>(s.rows()));
  const double scale = spec.gamma / std::sqrt(static_cast<double>(spec.k));
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix eps = Matrix::Zero(s.rows(), s.cols());
  Index ti = 0, tj = 0;
  double tmax = -1.0;
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = i; j < s.cols(); ++j) {
      const double bound = scale * std::abs(s(i, j));
      eps(i, j) = unit(rng) * bound;
      eps(j, i) = eps(i, j);
      if (std::abs(s(i, j)) > tmax) {
        tmax = std::abs(s(i, j));
        ti = i;
        tj = j;
      }
    }
  }
  if (spec.enforce_tight && s.size() > 0) {
    eps(ti, tj) = scale * s(ti, tj);
    eps(tj, ti) = eps(ti, tj);
  }
  return Covariance::perturbed(s + eps, spec.gamma);
}

struct ConditionConfig {
  std::size_t trials = 100;
  std::vector<double> gammas;
  std::uint64_t seed = 0;
  /// Degree bound used in the perturbation scale; 0 means max_degree_k(G) (at least 1).
  std::size_t k = 0;
  bool enforce_tight = false;
  bool experiment_mode = false;
  RecoveryConfig recovery;
};

struct TrialRecord {
  std::size_t gamma_index = 0;
  double gamma = 0.0;
  std::size_t trial = 0;
  bool ok = false;
  double rel_sigma = 0.0;
  double rel_lambda = 0.0;
  double ratio = 0.0;
  std::string error;
};

struct ConditionEstimate {
  double kappa_hat = 0.0;
  std::vector<TrialRecord> records;
  std::size_t failures = 0;
  bool large_gamma = false;  // some γ ≥ n⁻⁴ (only legal in experiment mode)
  Matrix lambda_hat;
};

inline std::size_t effective_k(const MixedGraph& g, std::size_t k) {
  return k != 0 ? k : std::max<std::size_t>(1, max_degree_k(g));
}

/// Seed of trial t at γ-index i; independent of the trial count so that nested runs agree.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t gamma_index, std::size_t trial) {
  return derive_seed(seed, {stream::perturbation, gamma_index, trial});
}

/// Monte Carlo lower estimate of the relative ℓ∞ condition number: the max over trials of
/// Rel(Λ̂, Λ̃)/Rel(Σ, Σ̃). Trials whose recovery fails are recorded and excluded.
inline ConditionEstimate estimate_condition_number(const MixedGraph& g, const Covariance& sigma,
                                                   const ConditionConfig& cfg) {
  if (cfg.gammas.empty()) throw SpecError("gamma grid is empty");
  const std::size_t n = g.size();
  const double cap = std::pow(static_cast<double>(std::max<std::size_t>(n, 1)), -4.0);
  ConditionEstimate est;
  for (double gm : cfg.gammas) {
    if (gm >= cap) est.large_gamma = true;
  }
  if (est.large_gamma && !cfg.experiment_mode) {
    throw SpecError("gamma grid contains values not below n^-4; enable experiment mode to allow this");
  }
  const RecoveryResult base = recover_all(g, sigma, cfg.recovery);
  est.lambda_hat = base.lambda_hat;
  const std::size_t k = effective_k(g, cfg.k);
  for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      TrialRecord rec;
      rec.gamma_index = gi;
      rec.gamma = cfg.gammas[gi];
      rec.trial = t;
      PerturbationSpec spec{cfg.gammas[gi], k, trial_seed(cfg.seed, gi, t), cfg.enforce_tight, cfg.experiment_mode};
      try {
        const Covariance pert = sample_perturbation(sigma, spec);
        const RecoveryResult r = recover_all(g, pert, cfg.recovery);
        rec.rel_sigma = relative_distance(sigma.sigma, pert.sigma);
        rec.rel_lambda = relative_distance(base.lambda_hat, r.lambda_hat);
        if (rec.rel_sigma == 0.0) {
          rec.error = "perturbation vanished";
        } else {
          rec.ratio = rec.rel_lambda / rec.rel_sigma;
          rec.ok = std::isfinite(rec.ratio);
          if (!rec.ok) rec.error = "non-finite ratio";
        }
      } catch (const NumericalError& e) {
        rec.error = e.what();
      }
      if (rec.ok) {
        est.kappa_hat = std::max(est.kappa_hat, rec.ratio);
      } else {
        ++est.failures;
      }
      est.records.push_back(std::move(rec));
    }
  }
  return est;
}

struct VertexAssumptions {
  double kappa = 1.0;
  double alpha_ratios[3] = {0.0, 0.0, 0.0};  // ‖Σ_{pa,v}‖, ‖Σ_{spa,pa}‖, ‖Σ_{spa,v}‖ over ‖Σ_{pa,pa}‖
  double beta_v = 0.0;                       // ‖Λ_{spa,pa}‖
  double min_weight = std::numeric_limits<double>::infinity();
  bool singular = false;
  bool pass_a1 = false;
  bool pass_a2 = false;
  bool pass_a3 = false;
};

struct AssumptionProfile {
  double alpha = 0.0;
  double beta = 0.0;
  double kappa0 = 1.0;
  double lambda_floor = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  std::size_t n = 0;
  double gamma = 0.0;  // γ used for the A.1 ceiling 1/(2γ)
  std::map<VertexId, VertexAssumptions> per_vertex;
  bool pass_a1 = true;
  bool pass_a2 = true;
  bool pass_a3 = true;

  [[nodiscard]] bool pass() const { return pass_a1 && pass_a2 && pass_a3; }
};

/// Measures A.1-A.3 on every vertex with parents and aggregates the worst cases. `gamma`
/// defaults to n⁻⁴; A.1 requires κ ≤ 1/(2γ).
inline AssumptionProfile check_assumptions(const MixedGraph& g, const Covariance& sigma, const Matrix& lambda,
                                           std::optional<double> gamma = std::nullopt) {
  require_square(sigma.sigma, g.size(), "sigma");
  require_square(lambda, g.size(), "lambda");
  const Matrix& s = sigma.sigma;
  const double n = static_cast<double>(g.size());
  AssumptionProfile prof;
  prof.n = g.size();
  prof.k = max_degree_k(g);
  prof.gamma = gamma.value_or(std::pow(std::max(n, 1.0), -4.0));
  const double weight_floor = 1.0 / (n * n);
  for (VertexId v = 0; v < g.size(); ++v) {
    const VertexList& pa = g.parents(v);
    if (pa.empty()) continue;
    const VertexList sp = spa(g, v);
    const VertexList vv{v};
    VertexAssumptions va;
    const Matrix spp = submatrix(s, pa, pa);
    const double npp = norm2(spp);
    const double smin = min_singular_value(spp);
    va.singular = npp == 0.0 || smin <= 1e-14 * npp;
    va.kappa = va.singular ? std::numeric_limits<double>::infinity() : npp / smin;
    if (npp > 0.0) {
      va.alpha_ratios[0] = norm2(submatrix(s, pa, vv)) / npp;
      va.alpha_ratios[1] = sp.empty() ? 0.0 : norm2(submatrix(s, sp, pa)) / npp;
      va.alpha_ratios[2] = sp.empty() ? 0.0 : norm2(submatrix(s, sp, vv)) / npp;
    } else {
      std::fill(std::begin(va.alpha_ratios), std::end(va.alpha_ratios), std::numeric_limits<double>::infinity());
    }
    va.beta_v = sp.empty() ? 0.0 : norm2(submatrix(lambda, sp, pa));
    for (VertexId p : pa) va.min_weight = std::min(va.min_weight, std::abs(lambda(static_cast<Index>(p), static_cast<Index>(v))));
    va.pass_a1 = !va.singular && va.kappa <= 1.0 / (2.0 * prof.gamma);
    va.pass_a2 = std::all_of(std::begin(va.alpha_ratios), std::end(va.alpha_ratios), [](double r) { return r < 1.0; });
    va.pass_a3 = va.beta_v < 1.0 && va.min_weight > weight_floor;

    prof.kappa0 = std::max(prof.kappa0, va.kappa);
    for (double r : va.alpha_ratios) prof.alpha = std::max(prof.alpha, r);
    prof.beta = std::max(prof.beta, va.beta_v);
    prof.lambda_floor = std::min(prof.lambda_floor, va.min_weight);
    prof.pass_a1 = prof.pass_a1 && va.pass_a1;
    prof.pass_a2 = prof.pass_a2 && va.pass_a2;
    prof.pass_a3 = prof.pass_a3 && va.pass_a3;
    prof.per_vertex[v] = va;
  }
  return prof;
}

struct PremiseReport {
  double first = 0.0;   // αβκ₀
  double second = 0.0;  // (ακ₀/D)(1 + κ₀(1+β)/D), D = 1 - αβκ₀
  double second_limit = 0.0;  // 0.99/k
  bool first_ok = false;
  bool second_ok = false;
  bool holds = false;
};

inline PremiseReport theorem_premise(double alpha, double beta, double kappa0, std::size_t k) {
  PremiseReport r;
  r.first = alpha * beta * kappa0;
  const double d = 1.0 - r.first;
  r.second = d > 0.0 ? (alpha * kappa0 / d) * (1.0 + kappa0 * (1.0 + beta) / d)
                     : std::numeric_limits<double>::infinity();
  r.second_limit = 0.99 / static_cast<double>(std::max<std::size_t>(k, 1));
  r.first_ok = r.first < 0.99;
  r.second_ok = r.second < r.second_limit;
  r.holds = r.first_ok && r.second_ok;
  return r;
}

inline PremiseReport theorem_premise(const AssumptionProfile& p) {
  return theorem_premise(p.alpha, p.beta, p.kappa0, p.k);
}

struct LemmaConstants {
  double eta = 0.0;
  double tau = 0.0;
  double c6 = 0.0;
  bool premise_ok = false;
  int iterations = 0;
};

namespace detail {

struct EtaTerms {
  double c = 0.0;  // coefficient of η on the left
  double d = 0.0;  // 1 - αβκ₀
};

inline EtaTerms eta_terms(double alpha, double beta, double kappa0, double k) {
  EtaTerms t;
  t.d = 1.0 - alpha * beta * kappa0;
  t.c = 1.0 - k * alpha * kappa0 / t.d - k * alpha * kappa0 * kappa0 * (1.0 + beta) / (t.d * t.d);
  return t;
}

// Right-hand side of the fixed-point equation, with τ and c₆ evaluated at `eta`.
inline double eta_rhs(double eta, double alpha, double beta, double kappa0, double k, double n, double gamma,
                      double d, double* tau_out = nullptr, double* c6_out = nullptr) {
  const double tau = k * eta / (n * n);
  const double base = k * eta + 1.0 + beta + tau;
  const double c6 = 4.0 * alpha * (1.0 + beta) * std::pow(kappa0, 3) * base * base / (d * d * d);
  if (tau_out) *tau_out = tau;
  if (c6_out) *c6_out = c6;
  return alpha * kappa0 * kappa0 * (1.0 + beta) * (1.0 + beta + tau) / (d * d) +
         kappa0 * alpha * (1.0 + beta + tau) / d + c6 * gamma;
}

}  // namespace detail

/// η solving η·C = ακ₀²(1+β)(1+β+τ)/D² + κ₀α(1+β+τ)/D + c₆γ with τ = kη/n² and
/// c₆ = 4α(1+β)κ₀³(kη+1+β+τ)²/D³, by fixed-point iteration from η = 0.
inline LemmaConstants eta_bound(double alpha, double beta, double kappa0, std::size_t n, std::size_t k, double gamma) {
  const double kk = static_cast<double>(std::max<std::size_t>(k, 1));
  const double nn = static_cast<double>(n);
  const auto terms = detail::eta_terms(alpha, beta, kappa0, kk);
  if (terms.d <= 0.0) throw PremiseError("1 - alpha*beta*kappa0 is not positive");
  if (terms.c <= 0.0) throw PremiseError("the coefficient of eta is not positive; the premise fails");
  LemmaConstants out;
  out.premise_ok = theorem_premise(alpha, beta, kappa0, k).holds;
  double eta = 0.0;
  for (int it = 1; it <= 100; ++it) {
    double tau = 0.0, c6 = 0.0;
    const double next = detail::eta_rhs(eta, alpha, beta, kappa0, kk, nn, gamma, terms.d, &tau, &c6) / terms.c;
    out.iterations = it;
    if (!std::isfinite(next)) break;
    const bool done = std::abs(next - eta) <= 1e-12 * std::abs(next);
    eta = next;
    if (done || next == 0.0) {
      out.eta = eta;
      detail::eta_rhs(eta, alpha, beta, kappa0, kk, nn, gamma, terms.d, &out.tau, &out.c6);
      return out;
    }
  }
  Matrix last(1, 1);
  last(0, 0) = eta;
  throw ConvergenceError("eta fixed point did not converge in 100 iterations", last);
}

inline LemmaConstants eta_bound(const AssumptionProfile& p, std::size_t n, std::size_t k, double gamma) {
  return eta_bound(p.alpha, p.beta, p.kappa0, n, k, gamma);
}

struct ConditionBound {
  double value = 0.0;           // η√k n²
  std::optional<double> tight;  // η√k / λ_floor when λ_floor > n⁻²
};

inline ConditionBound condition_bound(const LemmaConstants& c, const AssumptionProfile& p, std::size_t n,
                                      std::size_t k) {
  const double nn = static_cast<double>(n);
  const double sk = std::sqrt(static_cast<double>(k));
  ConditionBound b;
  b.value = c.eta * sk * nn * nn;
  if (std::isfinite(p.lambda_floor) && p.lambda_floor > 1.0 / (nn * nn)) b.tight = c.eta * sk / p.lambda_floor;
  return b;
}

inline ConditionBound condition_bound(double eta, std::size_t n, std::size_t k) {
  return {eta * std::sqrt(static_cast<double>(k)) * static_cast<double>(n) * static_cast<double>(n), std::nullopt};
}

struct Lemma1Vertex {
  VertexId vertex = 0;
  double max_error = 0.0;  // worst ‖Λ̃_{pa,v} - Λ_{pa,v}‖ over perturbations
  bool pass = true;
};

struct Lemma1Report {
  double bound = 0.0;  // η·γ
  std::vector<Lemma1Vertex> vertices;
  std::size_t perturbations = 0;
  std::size_t inconclusive = 0;
  bool pass = true;
};

/// For each perturbation (seeded per index from spec.seed), checks
/// ‖Λ̃_{pa,v} - Λ_{pa,v}‖ ≤ η·γ on every vertex with parents.
inline Lemma1Report lemma1_error_check(const MixedGraph& g, const Covariance& sigma, const Matrix& lambda_true,
                                       const PerturbationSpec& spec, const LemmaConstants& constants,
                                       std::size_t perturbations = 100, const RecoveryConfig& rcfg = {}) {
  require_square(lambda_true, g.size(), "lambda_true");
  Lemma1Report rep;
  rep.bound = constants.eta * spec.gamma;
  rep.perturbations = perturbations;
  std::map<VertexId, Lemma1Vertex> worst;
  for (VertexId v = 0; v < g.size(); ++v) {
    if (!g.parents(v).empty()) worst[v] = {v, 0.0, true};
  }
  for (std::size_t t = 0; t < perturbations; ++t) {
    PerturbationSpec s = spec;
    s.seed = trial_seed(spec.seed, 0, t);
    RecoveryResult r;
    try {
      r = recover_all(g, sample_perturbation(sigma, s), rcfg);
    } catch (const NumericalError&) {
      ++rep.inconclusive;
      continue;
    }
    for (auto& [v, w] : worst) {
      const auto pa = to_index_list(g.parents(v));
      const double err = (r.lambda_hat(pa, static_cast<Index>(v)) - lambda_true(pa, static_cast<Index>(v))).norm();
      w.max_error = std::max(w.max_error, err);
      if (err > rep.bound) w.pass = false;
    }
  }
  for (auto& [v, w] : worst) {
    rep.pass = rep.pass && w.pass;
    rep.vertices.push_back(w);
  }
  return rep;
}

}  // namespace lsem
