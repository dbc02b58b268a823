// Draws a small instance, recovers the edge weights from its covariance, and estimates the
// condition number under random perturbations.
#include <cstdio>

#include "lsem/lsem.hpp"

int main() {
  lsem::GenerativeConfig cfg;
  cfg.n = 12;
  cfg.k = 2;
  cfg.mu = 30.0;
  cfg.d = lsem::d_min(cfg.k, static_cast<double>(cfg.n));
  cfg.seed = 7;
  const lsem::Model2Instance inst = lsem::gen_model2_instance(cfg);

  const lsem::RecoveryResult rec = lsem::recover_all(inst.graph, inst.sigma);
  const double err = (rec.lambda_hat - inst.params.lambda).cwiseAbs().maxCoeff();
  std::printf("n=%zu directed=%zu layers=%zu\n", inst.graph.size(), inst.graph.directed_edges().size(),
              lsem::layer_decomposition(inst.graph).count());
  std::printf("max |lambda_hat - lambda| = %.3e\n", err);

  lsem::ConditionConfig cc;
  cc.trials = 50;
  cc.gammas = {1e-8};
  cc.seed = 11;
  const lsem::ConditionEstimate est = lsem::estimate_condition_number(inst.graph, inst.sigma, cc);
  const lsem::AssumptionProfile prof = lsem::check_assumptions(inst.graph, inst.sigma, inst.params.lambda, 1e-8);
  std::printf("kappa_hat = %.4f  alpha = %.4f  beta = %.4f  kappa0 = %.4f\n", est.kappa_hat, prof.alpha, prof.beta,
              prof.kappa0);
  if (lsem::theorem_premise(prof).holds) {
    const lsem::LemmaConstants lc = lsem::eta_bound(prof, cfg.n, cfg.k, 1e-8);
    const lsem::ConditionBound cb = lsem::condition_bound(lc, prof, cfg.n, cfg.k);
    std::printf("eta = %.4f  bound = %.4f\n", lc.eta, cb.value);
  }
  return 0;
}
