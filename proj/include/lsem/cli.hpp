#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsem/error.hpp"
#include "lsem/experiments.hpp"
#include "lsem/generators.hpp"
#include "lsem/io.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/recovery.hpp"
#include "lsem/reduction.hpp"
#include "lsem/robustness.hpp"

namespace lsem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;

namespace fs = std::filesystem;
using io::json;

/// $LSEM_OUTPUT_DIR, or the working directory.
inline fs::path default_output_dir() {
  const char* env = std::getenv("LSEM_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

inline fs::path output_or_default(const std::string& given, const std::string& name) {
  return given.empty() ? default_output_dir() / name : fs::path(given);
}

namespace detail {

struct GenerateArgs {
  std::string kind = "sdd";
  std::size_t n = 10;
  std::size_t k = 2;
  std::optional<double> mu;
  std::optional<std::size_t> d;
  std::optional<double> p;
  double range = 1.0;
  double extra = 0.1;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

inline int run_generate(const GenerateArgs& a, std::ostream& out) {
  const fs::path dir = a.out_dir.empty() ? default_output_dir() : fs::path(a.out_dir);
  MixedGraph g;
  ParamSet params;
  json cfg{{"kind", a.kind}, {"n", a.n}, {"seed", a.seed}};
  if (a.kind == "model2") {
    GenerativeConfig gc;
    gc.n = a.n;
    gc.k = a.k;
    gc.mu = a.mu.value_or(10.0 * static_cast<double>(a.k + 1));
    gc.d = a.d.value_or(a.n >= 2 ? d_min(a.k, static_cast<double>(a.n)) : 1);
    gc.seed = a.seed;
    const Model2Instance inst = gen_model2_instance(gc, a.p.value_or(0.5));
    g = inst.graph;
    params = inst.params;
    cfg["k"] = gc.k;
    cfg["mu"] = gc.mu;
    cfg["d"] = gc.d;
    cfg["p"] = a.p.value_or(0.5);
    cfg["omega_retries"] = inst.omega.retries;
  } else {
    const double p = a.p.value_or(0.2);
    g = gen_random_bowfree_graph({a.n, p, a.extra, 0, 0, a.seed});
    const SDDNoiseConfig nc{a.range, derive_seed(a.seed, {1})};
    params = {gen_lambda_range(g, nc), gen_omega_sdd(g, nc)};
    cfg["p"] = p;
    cfg["range"] = a.range;
    cfg["extra_bidirected_p"] = a.extra;
  }
  const Covariance sigma = forward_map(g, params);
  io::write_graph(dir / "graph.json", g);
  io::write_text(dir / "params.json", io::dump(io::params_to_json(params)));
  io::write_matrix_csv(dir / "sigma.csv", sigma.sigma);
  if (a.samples > 0) {
    io::write_matrix_csv(dir / "observations.csv", sample_observations(sigma, a.samples, a.seed));
    cfg["samples"] = a.samples;
  }
  io::write_text(dir / "manifest.json", io::dump(json{{"schema", 1}, {"command", "generate"}, {"config", cfg}}));
  out << "generated n=" << g.size() << " directed=" << g.directed_edges().size()
      << " bidirected=" << g.bidirected_edges().size() << " in " << dir.string() << "\n";
  return kExitOk;
}

struct RecoverArgs {
  std::string graph, sigma, out, convention = "transform-all";
  double sing_tol = 1e-10;
  bool full = false;
};

inline int run_recover(const RecoverArgs& a, std::ostream& out) {
  const MixedGraph g = io::read_graph(a.graph);
  const Covariance sigma = io::read_covariance(a.sigma);
  RecoveryConfig cfg;
  cfg.sing_tol = a.sing_tol;
  cfg.convention = a.convention == "half-trek" ? RowConvention::half_trek : RowConvention::transform_all;
  const RecoveryResult r = recover_all(g, sigma, cfg);
  json j = io::recovery_to_json(r);
  if (a.full) {
    const Matrix om = recover_omega(g, r.lambda_hat, sigma);
    j["omega"] = io::matrix_to_json(project_omega_pattern(om, g).omega);
  }
  const fs::path path = output_or_default(a.out, "lambda.json");
  io::write_text(path, io::dump(j));
  out << "recovered " << r.per_vertex.size() << " vertex systems -> " << path.string() << "\n";
  return kExitOk;
}

struct ConditionArgs {
  std::string graph, sigma, out, trials_csv;
  std::vector<double> gammas;
  std::size_t trials = 100;
  std::size_t k = 0;
  bool experiment_mode = false;
  bool tight = false;
  std::uint64_t seed = 0;
};

inline int run_condition(const ConditionArgs& a, std::ostream& out) {
  const MixedGraph g = io::read_graph(a.graph);
  const Covariance sigma = io::read_covariance(a.sigma);
  ConditionConfig cfg;
  cfg.trials = a.trials;
  cfg.gammas = a.gammas;
  if (cfg.gammas.empty()) {
    cfg.gammas = {0.1 * std::pow(static_cast<double>(std::max<std::size_t>(g.size(), 1)), -4.0)};
  }
  cfg.seed = a.seed;
  cfg.k = a.k;
  cfg.enforce_tight = a.tight;
  cfg.experiment_mode = a.experiment_mode;
  const ConditionEstimate est = estimate_condition_number(g, sigma, cfg);
  const std::size_t k = effective_k(g, a.k);
  const double gmax = *std::max_element(cfg.gammas.begin(), cfg.gammas.end());
  const AssumptionProfile prof = check_assumptions(g, sigma, est.lambda_hat, gmax);
  const PremiseReport prem = theorem_premise(prof);
  json eta = nullptr, bound = nullptr, tight = nullptr;
  if (prem.holds) {
    try {
      const LemmaConstants lc = eta_bound(prof, g.size(), k, gmax);
      const ConditionBound cb = condition_bound(lc, prof, g.size(), k);
      eta = io::number(lc.eta);
      bound = io::number(cb.value);
      if (cb.tight) tight = io::number(*cb.tight);
    } catch (const PremiseError&) {
    }
  }
  json j{{"schema", 1},
         {"kappa_hat", io::number(est.kappa_hat)},
         {"gamma_grid", cfg.gammas},
         {"trials", cfg.trials},
         {"k", k},
         {"seed", a.seed},
         {"enforce_tight", a.tight},
         {"experiment_mode", a.experiment_mode},
         {"large_gamma", est.large_gamma},
         {"failures", est.failures},
         {"profile", io::profile_to_json(prof)},
         {"premise", io::premise_to_json(prem)},
         {"eta", eta},
         {"bound", bound},
         {"bound_tight", tight}};
  const fs::path path = output_or_default(a.out, "condition.json");
  io::write_text(path, io::dump(j));
  if (!a.trials_csv.empty()) io::write_text(a.trials_csv, io::trials_to_csv(est));
  out << "kappa_hat=" << est.kappa_hat << " failures=" << est.failures << " -> " << path.string() << "\n";
  return kExitOk;
}

struct CheckArgs {
  std::string graph, sigma, lambda, params, out;
  std::optional<double> gamma;
};

inline int run_check(const CheckArgs& a, std::ostream& out) {
  const MixedGraph g = io::read_graph(a.graph);
  const BowFreeReport bf = validate_bow_free(g);
  json violations = json::array();
  for (const auto& [x, y] : bf.violations) violations.push_back(json::array({x + 1, y + 1}));
  json j{{"schema", 1}, {"bow_free", bf.pass}, {"violations", violations}};
  bool ok = bf.pass;
  try {
    j["layers"] = layer_decomposition(g).count();
    j["k_layered"] = check_k_layered(g);
    j["acyclic"] = true;
  } catch (const AcyclicityError& e) {
    j["acyclic"] = false;
    j["cycle"] = e.what();
    ok = false;
  }
  j["max_degree"] = max_degree_k(g);
  if (!a.sigma.empty() && ok) {
    const Covariance sigma = io::read_covariance(a.sigma);
    Matrix lambda;
    if (!a.params.empty()) {
      lambda = io::read_params(a.params).lambda;
    } else if (!a.lambda.empty()) {
      lambda = fs::path(a.lambda).extension() == ".json" ? [&] {
        const json lj = io::parse_json(io::read_text(a.lambda), a.lambda);
        return io::matrix_from_json(lj.contains("lambda") ? lj["lambda"] : lj);
      }()
                                                         : io::read_matrix(a.lambda);
    } else {
      lambda = recover_all(g, sigma).lambda_hat;
    }
    const AssumptionProfile prof = check_assumptions(g, sigma, lambda, a.gamma);
    j["profile"] = io::profile_to_json(prof);
    j["premise"] = io::premise_to_json(theorem_premise(prof));
  }
  const std::string text = io::dump(j);
  if (a.out.empty()) {
    out << text;
  } else {
    io::write_text(a.out, text);
    out << (ok ? "graph ok" : "graph invalid") << " -> " << a.out << "\n";
  }
  return ok ? kExitOk : kExitValidation;
}

struct ReduceArgs {
  std::string graph, sigma, out_dir;
  bool verify = false;
};

inline int run_reduce(const ReduceArgs& a, std::ostream& out) {
  const MixedGraph g = io::read_graph(a.graph);
  const Covariance sigma = io::read_covariance(a.sigma);
  const ReductionOutput red = reduce(g, sigma);
  const fs::path dir = a.out_dir.empty() ? default_output_dir() : fs::path(a.out_dir);
  io::write_graph(dir / "graph.json", red.g_prime);
  io::write_matrix_csv(dir / "sigma.csv", red.sigma_prime->sigma);
  std::optional<ReductionVerification> ver;
  if (a.verify) ver = verify_reduction(g, sigma, red);
  io::write_text(dir / "manifest.json", io::dump(io::reduction_manifest(red, ver ? &*ver : nullptr)));
  out << "reduced n=" << g.size() << " -> n'=" << red.g_prime.size() << " gadgets=" << red.gadgets.size()
      << " layers=" << red.k_layers;
  if (ver) out << " verification=" << (ver->pass() ? "pass" : "fail");
  out << " in " << dir.string() << "\n";
  return ver && !ver->pass() ? kExitValidation : kExitOk;
}

struct ExperimentArgs {
  std::string mode = "simulated", dataset, out, plot, normalize = "0";
  std::vector<double> p{0.2}, range{1.0};
  std::vector<std::size_t> n{20};
  std::size_t k = 2, graphs = 10, graph_offset = 0, runs = 10, samples = 50;
  double noise_eps = 0.1, extra = 0.1;
  std::uint64_t seed = 0;
};

inline int run_experiment_cmd(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  cfg.mode = parse_mode(a.mode);
  if (!a.dataset.empty()) cfg.dataset_path = a.dataset;
  cfg.p = a.p;
  cfg.k = a.k;
  cfg.n = a.n;
  cfg.range = a.range;
  if (a.normalize == "both") {
    cfg.normalize = {false, true};
  } else {
    cfg.normalize = {a.normalize == "1"};
  }
  cfg.noise_eps = a.noise_eps;
  cfg.extra_bidirected_p = a.extra;
  cfg.graphs = a.graphs;
  cfg.graph_offset = a.graph_offset;
  cfg.runs_per_graph = a.runs;
  cfg.samples = a.samples;
  cfg.seed = a.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentReport rep = run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path path = output_or_default(a.out, "report.json");
  io::write_text(path, io::dump(io::report_to_json(rep)));
  if (!a.plot.empty()) io::write_text(a.plot, io::report_plot_csv(rep));
  out << mode_name(cfg.mode) << " report -> " << path.string() << "\n";
  err << "runtime_seconds=" << secs << "\n";
  return kExitOk;
}

}  // namespace detail

/// Parses and runs one subcommand. Exit codes: 0 success, 1 validation failure, 2 numerical
/// failure, 64 usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Parameter recovery and robustness analysis for linear structural equation models", "lsem"};
  app.require_subcommand(1);

  detail::GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Draw a random instance (graph, parameters, covariance)");
  g->add_option("--kind", gen.kind, "sdd or model2")->check(CLI::IsMember({"sdd", "model2"}));
  g->add_option("--n", gen.n, "Vertex count")->check(CLI::PositiveNumber);
  g->add_option("--k", gen.k, "Degree bound (model2)")->check(CLI::PositiveNumber);
  g->add_option("--mu", gen.mu, "Weight scale (model2, default 10(k+1))");
  g->add_option("--d", gen.d, "Sphere dimension (model2, default d_min)");
  g->add_option("--p", gen.p, "Directed edge probability")->check(CLI::Range(0.0, 1.0));
  g->add_option("--range", gen.range, "Weight half-width (sdd)");
  g->add_option("--extra-bidirected", gen.extra, "Extra bidirected edge probability (sdd)")->check(CLI::Range(0.0, 1.0));
  g->add_option("--samples", gen.samples, "Also write this many Gaussian observations");
  g->add_option("--seed", gen.seed, "RNG seed")->required();
  g->add_option("--out-dir", gen.out_dir, "Output directory");

  detail::RecoverArgs rec;
  auto* r = app.add_subcommand("recover", "Recover edge weights from a covariance matrix");
  r->add_option("--graph", rec.graph, "Graph JSON")->required();
  r->add_option("--sigma", rec.sigma, "Covariance CSV or JSON")->required();
  r->add_option("--out", rec.out, "Output JSON");
  r->add_option("--convention", rec.convention, "Row convention")->check(CLI::IsMember({"transform-all", "half-trek"}));
  r->add_option("--sing-tol", rec.sing_tol, "Relative singularity threshold");
  r->add_flag("--full", rec.full, "Also recover and project the noise covariance");

  detail::ConditionArgs con;
  auto* c = app.add_subcommand("condition", "Monte Carlo condition-number estimate and bound");
  c->add_option("--graph", con.graph, "Graph JSON")->required();
  c->add_option("--sigma", con.sigma, "Covariance CSV or JSON")->required();
  c->add_option("--gamma", con.gammas, "Perturbation levels");
  c->add_option("--trials", con.trials, "Trials per gamma")->check(CLI::PositiveNumber);
  c->add_option("--k", con.k, "Degree bound for the perturbation scale (default: graph max degree)");
  c->add_flag("--experiment-mode", con.experiment_mode, "Allow gamma >= n^-4");
  c->add_flag("--tight", con.tight, "Make one perturbation entry meet its bound");
  c->add_option("--seed", con.seed, "RNG seed")->required();
  c->add_option("--out", con.out, "Output JSON");
  c->add_option("--trials-csv", con.trials_csv, "Per-trial CSV");

  detail::CheckArgs chk;
  auto* k = app.add_subcommand("check", "Structural checks and assumption profile");
  k->add_option("--graph", chk.graph, "Graph JSON")->required();
  k->add_option("--sigma", chk.sigma, "Covariance CSV or JSON");
  k->add_option("--lambda", chk.lambda, "Edge weights (CSV, JSON matrix, or recovery JSON)");
  k->add_option("--params", chk.params, "Parameter JSON");
  k->add_option("--gamma", chk.gamma, "Gamma for the condition ceiling (default n^-4)");
  k->add_option("--out", chk.out, "Output JSON (default: stdout)");

  detail::ReduceArgs red;
  auto* d = app.add_subcommand("reduce", "Reduce to a layered graph and covariance");
  d->add_option("--graph", red.graph, "Graph JSON")->required();
  d->add_option("--sigma", red.sigma, "Covariance CSV or JSON")->required();
  d->add_option("--out-dir", red.out_dir, "Output directory");
  d->add_flag("--verify", red.verify, "Run the reduction verification checks");

  detail::ExperimentArgs ex;
  auto* e = app.add_subcommand("experiment", "Run an experiment pipeline and write a report");
  e->add_option("--mode", ex.mode, "Pipeline")->check(CLI::IsMember({"gene-style", "simulated", "assumption-survey"}));
  e->add_option("--dataset", ex.dataset, "Observation CSV (default: synthetic stand-in)");
  e->add_option("--p", ex.p, "Directed edge probabilities")->check(CLI::Range(0.0, 1.0));
  e->add_option("--k", ex.k, "Degree setting (echoed)");
  e->add_option("--n", ex.n, "Vertex counts (simulated)");
  e->add_option("--range", ex.range, "Weight half-widths (simulated)");
  e->add_option("--normalize", ex.normalize, "Row normalization (gene-style)")->check(CLI::IsMember({"0", "1", "both"}));
  e->add_option("--noise-eps", ex.noise_eps, "Data noise standard deviation (gene-style)");
  e->add_option("--extra-bidirected", ex.extra, "Extra bidirected edge probability")->check(CLI::Range(0.0, 1.0));
  e->add_option("--graphs", ex.graphs, "Random graphs per configuration")->check(CLI::PositiveNumber);
  e->add_option("--graph-offset", ex.graph_offset, "Index of the first graph");
  e->add_option("--runs", ex.runs, "Runs per graph");
  e->add_option("--samples", ex.samples, "Samples per run (simulated)");
  e->add_option("--seed", ex.seed, "RNG seed")->required();
  e->add_option("--out", ex.out, "Report JSON");
  e->add_option("--plot", ex.plot, "Plot data CSV");

  std::vector<const char*> argv{"lsem"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return detail::run_generate(gen, out);
    if (*r) return detail::run_recover(rec, out);
    if (*c) return detail::run_condition(con, out);
    if (*k) return detail::run_check(chk, out);
    if (*d) return detail::run_reduce(red, out);
    if (*e) return detail::run_experiment_cmd(ex, out, err);
  } catch (const Error& ex_err) {
    err << "error: " << ex_err.what() << "\n";
    return ex_err.error_class() == ErrorClass::validation ? kExitValidation : kExitNumerical;
  } catch (const fs::filesystem_error& fe) {
    err << "error: " << fe.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace lsem::cli
