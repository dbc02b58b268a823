#include <gtest/gtest.h>

#include "test_support.hpp"

namespace lsem {
namespace {

using test::graph1;
using test::max_abs;

Model2Instance model2(std::size_t n, std::uint64_t seed, std::size_t k = 2) {
  GenerativeConfig cfg;
  cfg.n = n;
  cfg.k = k;
  cfg.mu = 10.0 * static_cast<double>(k + 1);
  cfg.d = d_min(k, static_cast<double>(n));
  cfg.seed = seed;
  return gen_model2_instance(cfg);
}

// Independent transcription of the η equation: η·C - RHS(η).
double eta_residual(double eta, double a, double b, double k0, double k, double n, double gamma) {
  const double d = 1.0 - a * b * k0;
  const double c = 1.0 - k * a * k0 / d - k * a * k0 * k0 * (1.0 + b) / (d * d);
  const double tau = k * eta / (n * n);
  const double c6 = 4.0 * a * (1.0 + b) * k0 * k0 * k0 * std::pow(k * eta + 1.0 + b + tau, 2.0) / (d * d * d);
  const double rhs = a * k0 * k0 * (1.0 + b) * (1.0 + b + tau) / (d * d) + k0 * a * (1.0 + b + tau) / d + c6 * gamma;
  return eta * c - rhs;
}

double eta_bisection(double a, double b, double k0, double k, double n, double gamma) {
  double lo = 0.0, hi = 1e-3;
  while (eta_residual(hi, a, b, k0, k, n, gamma) < 0.0) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (eta_residual(mid, a, b, k0, k, n, gamma) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(RelativeDistance, Examples) {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  EXPECT_EQ(relative_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(relative_distance(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0)), 0.5);
  Matrix i2 = Matrix::Identity(2, 2), b(2, 2);
  b << 1, 9, 0, 1;
  EXPECT_EQ(relative_distance(i2, b), 0.0);
  EXPECT_THROW(relative_distance(Matrix::Zero(2, 2), b), UndefinedDistanceError);
  EXPECT_THROW(relative_distance(i2, Matrix::Zero(3, 3)), ShapeError);
}

TEST(RelativeDistance, UsesFirstArgumentAsDenominator) {
  const Matrix a = Matrix::Constant(1, 1, 2.0), b = Matrix::Constant(1, 1, 1.0);
  EXPECT_DOUBLE_EQ(relative_distance(a, b), 0.5);
  EXPECT_DOUBLE_EQ(relative_distance(b, a), 1.0);
}

TEST(Perturbation, VanishingGammaLeavesSigma) {
  const auto inst = test::sdd_instance(5, 0.4, 1);
  const auto p = sample_perturbation(inst.sigma, {1e-300, 2, 3, false, false});
  EXPECT_LE(max_abs(p.sigma - inst.sigma.sigma), 1e-250);
  EXPECT_EQ(p.provenance, Covariance::Provenance::perturbed);
}

TEST(Perturbation, EntrywiseBoundAndSymmetryOverManyDraws) {
  const auto inst = test::sdd_instance(6, 0.5, 2);
  const Matrix& s = inst.sigma.sigma;
  const double gamma = 1e-4, k = 3.0;
  for (std::uint64_t t = 0; t < 10000; ++t) {
    const Matrix e = sample_perturbation(inst.sigma, {gamma, 3, t, t % 2 == 0, true}).sigma - s;
    ASSERT_TRUE(e.isApprox(e.transpose(), 0.0));
    for (Index i = 0; i < 6; ++i) {
      for (Index j = 0; j < 6; ++j) ASSERT_LE(std::abs(e(i, j)), gamma / std::sqrt(k) * std::abs(s(i, j)) * (1 + 1e-12));
    }
  }
}

TEST(Perturbation, TightEntryAtLargestMagnitude) {
  const auto inst = test::sdd_instance(6, 0.5, 4);
  const Matrix& s = inst.sigma.sigma;
  Index bi = 0, bj = 0;
  s.cwiseAbs().maxCoeff(&bi, &bj);
  const Matrix e = sample_perturbation(inst.sigma, {1e-5, 4, 7, true, true}).sigma - s;
  EXPECT_NEAR(e(bi, bj), 1e-5 / 2.0 * s(bi, bj), 1e-12 * std::abs(s(bi, bj)));
}

TEST(Perturbation, GammaRangeEnforced) {
  const auto inst = test::sdd_instance(5, 0.4, 1);
  EXPECT_THROW(sample_perturbation(inst.sigma, {1.0 / 625.0, 1, 0, false, false}), SpecError);
  EXPECT_THROW(sample_perturbation(inst.sigma, {0.0, 1, 0, false, false}), SpecError);
  EXPECT_NO_THROW(sample_perturbation(inst.sigma, {0.01, 1, 0, false, true}));
}

TEST(Perturbation, ClaimOneNormBounds) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = model2(12, s);
    const auto prof = check_assumptions(inst.graph, inst.sigma, inst.params.lambda);
    const std::size_t k = max_degree_k(inst.graph);
    for (std::uint64_t t = 0; t < 50; ++t) {
      const double gamma = 1e-6;
      const Matrix e = sample_perturbation(inst.sigma, {gamma, k, t, t % 3 == 0, true}).sigma - inst.sigma.sigma;
      for (VertexId v = 0; v < inst.graph.size(); ++v) {
        const auto& pa = inst.graph.parents(v);
        if (pa.empty()) continue;
        const double npp = norm2(submatrix(inst.sigma.sigma, pa, pa));
        ASSERT_LE(norm2(submatrix(e, pa, pa)), gamma * npp * (1 + 1e-12));
        const auto sp = spa(inst.graph, v);
        if (sp.empty()) continue;
        ASSERT_LE(norm2(submatrix(e, sp, VertexList{v})), gamma * prof.alpha * npp * (1 + 1e-12));
      }
    }
  }
}

TEST(ConditionNumber, TwoNodeMatchesDirectionalDerivative) {
  const auto g = graph1(2, {{1, 2}});
  Matrix l = Matrix::Zero(2, 2);
  l(0, 1) = 0.7;
  Matrix om(2, 2);
  om << 1.3, 0, 0, 0.6;
  const auto sigma = forward_map(g, {l, om});
  const Matrix& s = sigma.sigma;
  ConditionConfig cfg;
  cfg.trials = 1;
  cfg.gammas = {1e-7};
  cfg.seed = 5;
  const auto est = estimate_condition_number(g, sigma, cfg);
  ASSERT_EQ(est.records.size(), 1u);
  ASSERT_TRUE(est.records[0].ok);
  // Same perturbation direction, then λ(Σ) = Σ12/Σ11 differentiated by central differences.
  const Matrix e = sample_perturbation(sigma, {1e-7, 1, trial_seed(5, 0, 0), false, false}).sigma - s;
  auto lam = [](const Matrix& m) { return m(0, 1) / m(0, 0); };
  const double h = 1e-3;
  const double dlam = (lam(s + h * e) - lam(s - h * e)) / (2.0 * h);
  const double expected = std::abs(dlam) / 0.7 / relative_distance(s, s + e);
  EXPECT_NEAR(est.records[0].ratio, expected, 1e-4 * expected);
  EXPECT_TRUE(std::isfinite(est.kappa_hat));
}

TEST(ConditionNumber, PremiseInstanceBelowBound) {
  const auto inst = model2(12, 3);
  const double gamma = 1e-8;
  ConditionConfig cfg;
  cfg.trials = 100;
  cfg.gammas = {gamma};
  cfg.seed = 1;
  cfg.k = 2;
  const auto est = estimate_condition_number(inst.graph, inst.sigma, cfg);
  const auto prof = check_assumptions(inst.graph, inst.sigma, est.lambda_hat, gamma);
  ASSERT_TRUE(theorem_premise(prof).holds);
  const auto lc = eta_bound(prof, 12, 2, gamma);
  const auto cb = condition_bound(lc, prof, 12, 2);
  EXPECT_EQ(est.failures, 0u);
  EXPECT_LE(est.kappa_hat, cb.value);
  ASSERT_TRUE(cb.tight.has_value());
  EXPECT_LE(est.kappa_hat, *cb.tight);
}

TEST(ConditionNumber, MonotoneInTrialCount) {
  const auto inst = test::sdd_instance(8, 0.4, 6);
  ConditionConfig cfg;
  cfg.gammas = {1e-6, 1e-5};
  cfg.seed = 3;
  cfg.experiment_mode = true;
  double prev = 0.0;
  for (std::size_t t : {1, 5, 20, 60}) {
    cfg.trials = t;
    const double k = estimate_condition_number(inst.g, inst.sigma, cfg).kappa_hat;
    EXPECT_GE(k, prev);
    prev = k;
  }
}

TEST(ConditionNumber, LargeGammaNeedsExperimentMode) {
  const auto inst = test::sdd_instance(5, 0.4, 6);
  ConditionConfig cfg;
  cfg.trials = 2;
  cfg.gammas = {0.01};
  EXPECT_THROW(estimate_condition_number(inst.g, inst.sigma, cfg), SpecError);
  cfg.experiment_mode = true;
  const auto est = estimate_condition_number(inst.g, inst.sigma, cfg);
  EXPECT_TRUE(est.large_gamma);
  cfg.gammas.clear();
  EXPECT_THROW(estimate_condition_number(inst.g, inst.sigma, cfg), SpecError);
}

TEST(ConditionNumber, SingularBaseSystemPropagates) {
  // A tolerance above 1 rejects every system, including the unperturbed one.
  const auto inst = test::sdd_instance(6, 0.6, 8);
  ConditionConfig cfg;
  cfg.trials = 5;
  cfg.gammas = {1e-6};
  cfg.experiment_mode = true;
  const auto ok = estimate_condition_number(inst.g, inst.sigma, cfg);
  EXPECT_EQ(ok.failures, 0u);
  cfg.recovery.sing_tol = 2.0;
  EXPECT_THROW(estimate_condition_number(inst.g, inst.sigma, cfg), NearSingularError);
}

TEST(Assumptions, IdentityCovariance) {
  auto prof = check_assumptions(MixedGraph(3), Covariance::exact(Matrix::Identity(3, 3)), Matrix::Zero(3, 3));
  EXPECT_EQ(prof.kappa0, 1.0);
  EXPECT_EQ(prof.alpha, 0.0);
  EXPECT_TRUE(prof.pass());
  const auto g = graph1(3, {{1, 2}, {2, 3}});
  prof = check_assumptions(g, Covariance::exact(Matrix::Identity(3, 3)), Matrix::Zero(3, 3));
  EXPECT_EQ(prof.alpha, 0.0);
  EXPECT_DOUBLE_EQ(prof.kappa0, 1.0);
  for (const auto& [v, a] : prof.per_vertex) {
    EXPECT_EQ(a.alpha_ratios[0], 0.0);
    EXPECT_EQ(a.alpha_ratios[1], 0.0);
    EXPECT_EQ(a.alpha_ratios[2], 0.0);
  }
}

TEST(Assumptions, Model2KappaWithinFormula) {
  EXPECT_NEAR(model2_kappa0(30.0), 1.1475, 1e-4);
  const auto inst = model2(15, 11);
  const auto prof = check_assumptions(inst.graph, inst.sigma, inst.params.lambda);
  EXPECT_LE(prof.kappa0, 1.05 * model2_kappa0(30.0));
  EXPECT_LE(prof.beta, 1.0 / 30.0);
  EXPECT_TRUE(prof.pass());
}

TEST(Assumptions, IllConditionedParentsFailA1PerVertex) {
  const auto g = graph1(3, {{1, 3}, {2, 3}});
  Matrix s(3, 3);
  s << 1, 1 - 1e-9, 0.1, 1 - 1e-9, 1, 0.1, 0.1, 0.1, 1;
  Matrix l = Matrix::Zero(3, 3);
  l(0, 2) = l(1, 2) = 0.05;
  const auto prof = check_assumptions(g, Covariance::exact(s), l, 1e-8);
  EXPECT_FALSE(prof.pass_a1);
  EXPECT_FALSE(prof.per_vertex.at(2).pass_a1);
  EXPECT_FALSE(prof.per_vertex.at(2).singular);
  s(0, 1) = s(1, 0) = 1.0;
  const auto sing = check_assumptions(g, Covariance::exact(s), l);
  EXPECT_TRUE(sing.per_vertex.at(2).singular);
  EXPECT_FALSE(sing.pass_a1);
}

TEST(Assumptions, ScaleCovariance) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto inst = test::sdd_instance(9, 0.4, s);
    const auto a = check_assumptions(inst.g, inst.sigma, inst.params.lambda);
    const auto b = check_assumptions(inst.g, Covariance::exact(7.5 * inst.sigma.sigma), inst.params.lambda);
    for (const auto& [v, va] : a.per_vertex) {
      const auto& vb = b.per_vertex.at(v);
      ASSERT_NEAR(va.kappa, vb.kappa, 1e-9 * va.kappa);
      for (int i = 0; i < 3; ++i) ASSERT_NEAR(va.alpha_ratios[i], vb.alpha_ratios[i], 1e-12 + 1e-9 * va.alpha_ratios[i]);
    }
  }
}

TEST(Premise, Examples) {
  auto r = theorem_premise(0.0, 0.5, 2.0, 3);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.second, 0.0);
  r = theorem_premise(1.0, 1.0, 1.0, 1);
  EXPECT_FALSE(r.first_ok);
  EXPECT_FALSE(r.holds);
  const double mu = 30.0;
  r = theorem_premise(1.0 / mu, 1.0 / mu, model2_kappa0(mu), 2);
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.second_limit, 0.495, 1e-15);
}

TEST(Eta, ZeroAlphaGivesZero) {
  const auto c = eta_bound(0.0, 0.3, 1.5, 20, 2, 1e-9);
  EXPECT_EQ(c.eta, 0.0);
  EXPECT_EQ(c.tau, 0.0);
}

TEST(Eta, MatchesBisectionOracle) {
  const auto c = eta_bound(0.05, 0.05, 1.2, 20, 2, 1e-9);
  const double oracle = eta_bisection(0.05, 0.05, 1.2, 2.0, 20.0, 1e-9);
  EXPECT_NEAR(c.eta, oracle, 1e-10);
  EXPECT_DOUBLE_EQ(c.tau, 2.0 * c.eta / 400.0);
  EXPECT_TRUE(c.premise_ok);
  EXPECT_GT(c.eta, 0.0);
}

TEST(Eta, MatchesBisectionOnRandomPremises) {
  Rng rng(4);
  std::uniform_real_distribution<double> a(0.0, 0.1), b(0.0, 0.5), k0(1.0, 1.5), g(1e-12, 1e-6);
  int checked = 0;
  while (checked < 200) {
    const double al = a(rng), be = b(rng), ka = k0(rng), ga = g(rng);
    const std::size_t k = 1 + static_cast<std::size_t>(checked % 3);
    if (!theorem_premise(al, be, ka, k).holds) continue;
    const auto c = eta_bound(al, be, ka, 25, k, ga);
    ASSERT_NEAR(c.eta, eta_bisection(al, be, ka, static_cast<double>(k), 25.0, ga), 1e-10 * std::max(1.0, c.eta));
    ++checked;
  }
}

TEST(Eta, Model2ConstantsGiveFiniteEtaOfOrderOneOverK) {
  for (std::size_t k : {1, 2, 3}) {
    const double mu = 10.0 * static_cast<double>(k + 1);
    const auto c = eta_bound(1.0 / mu, 1.0 / mu, model2_kappa0(mu), 30, k, 1e-9);
    EXPECT_TRUE(std::isfinite(c.eta));
    EXPECT_LT(c.eta * static_cast<double>(k), 1.0);
  }
}

TEST(Eta, NonPositiveDenominatorIsPremiseError) {
  EXPECT_THROW(eta_bound(1.0, 1.0, 1.0, 10, 1, 1e-9), PremiseError);
  EXPECT_THROW(eta_bound(0.4, 0.1, 1.2, 10, 2, 1e-9), PremiseError);
}

TEST(ConditionBoundValue, Examples) {
  EXPECT_EQ(condition_bound(0.0, 10, 4).value, 0.0);
  EXPECT_DOUBLE_EQ(condition_bound(1.0, 10, 4).value, 200.0);
  LemmaConstants c;
  c.eta = 1.0;
  AssumptionProfile p;
  p.lambda_floor = 0.5;
  const auto b = condition_bound(c, p, 10, 4);
  ASSERT_TRUE(b.tight.has_value());
  EXPECT_DOUBLE_EQ(*b.tight, 4.0);
  p.lambda_floor = 0.001;
  EXPECT_FALSE(condition_bound(c, p, 10, 4).tight.has_value());
}

TEST(LemmaOne, VanishingGammaGivesVanishingError) {
  const auto inst = model2(12, 2);
  const auto prof = check_assumptions(inst.graph, inst.sigma, inst.params.lambda);
  const auto lc = eta_bound(prof, 12, 2, 1e-8);
  const auto small = lemma1_error_check(inst.graph, inst.sigma, inst.params.lambda, {1e-14, 2, 1, false, false}, lc, 5);
  const auto large = lemma1_error_check(inst.graph, inst.sigma, inst.params.lambda, {1e-8, 2, 1, false, false}, lc, 5);
  double ws = 0.0, wl = 0.0;
  for (const auto& v : small.vertices) ws = std::max(ws, v.max_error);
  for (const auto& v : large.vertices) wl = std::max(wl, v.max_error);
  EXPECT_LT(ws, 1e-11);
  EXPECT_LT(ws, wl);
}

TEST(LemmaOne, Model2InstancePassesIncludingTight) {
  const auto inst = model2(15, 7);
  const double gamma = 1e-8;
  const auto prof = check_assumptions(inst.graph, inst.sigma, inst.params.lambda, gamma);
  ASSERT_TRUE(theorem_premise(prof).holds);
  const auto lc = eta_bound(prof, 15, 2, gamma);
  const auto rep = lemma1_error_check(inst.graph, inst.sigma, inst.params.lambda, {gamma, 2, 17, false, false}, lc);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.inconclusive, 0u);
  EXPECT_EQ(rep.perturbations, 100u);
  const auto tight = lemma1_error_check(inst.graph, inst.sigma, inst.params.lambda, {gamma, 2, 18, true, false}, lc);
  EXPECT_TRUE(tight.pass);
}

}  // namespace
}  // namespace lsem
