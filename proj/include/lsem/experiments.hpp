#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lsem/error.hpp"
#include "lsem/generators.hpp"
#include "lsem/io.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/recovery.hpp"
#include "lsem/robustness.hpp"
#include "lsem/rng.hpp"

namespace lsem {

enum class ExperimentMode { gene_style, simulated, assumption_survey };

inline std::string mode_name(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::gene_style: return "gene-style";
    case ExperimentMode::simulated: return "simulated";
    case ExperimentMode::assumption_survey: return "assumption-survey";
  }
  return "unknown";
}

inline ExperimentMode parse_mode(const std::string& s) {
  if (s == "gene-style") return ExperimentMode::gene_style;
  if (s == "simulated") return ExperimentMode::simulated;
  if (s == "assumption-survey") return ExperimentMode::assumption_survey;
  throw ConfigError("unknown experiment mode '" + s + "'");
}

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::simulated;
  std::optional<std::string> dataset_path;  // gene-style / survey; synthetic stand-in when absent
  std::vector<double> p{0.2};
  std::size_t k = 2;                        // echoed; the graph generator is uncapped
  std::vector<std::size_t> n{20};           // simulated only
  std::vector<double> range{1.0};           // simulated only
  std::vector<bool> normalize{false};       // gene-style only
  double noise_eps = 0.1;
  double extra_bidirected_p = 0.1;
  std::size_t graphs = 10;
  std::size_t graph_offset = 0;             // index of the first graph; seeds depend on the index
  std::size_t runs_per_graph = 10;
  std::size_t samples = 50;
  std::uint64_t seed = 0;
};

struct GraphOutcome {
  std::size_t index = 0;
  std::vector<double> ratios;
  std::size_t failures = 0;    // recovery failures
  std::size_t degenerate = 0;  // vanishing perturbation or all-zero Λ
  // assumption survey
  bool a1 = false, a2 = false, a3 = false, vacuous = false;
};

struct CellStats {
  std::size_t count = 0;
  double mean = std::nan("");
  double median = std::nan("");
  double max = std::nan("");
  std::size_t failures = 0;
  std::size_t degenerate = 0;
  std::size_t pass_a1 = 0, pass_a2 = 0, pass_a3 = 0, pass_all = 0;
};

struct ExperimentCell {
  double p = 0.0;
  std::size_t n = 0;
  double range = 0.0;
  bool normalize = false;
  std::vector<GraphOutcome> graphs;
  CellStats stats;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::size_t dataset_rows = 0;
  std::size_t dataset_cols = 0;
  std::vector<ExperimentCell> cells;
};

inline void compute_stats(ExperimentCell& cell) {
  CellStats s;
  std::vector<double> all;
  for (const auto& g : cell.graphs) {
    all.insert(all.end(), g.ratios.begin(), g.ratios.end());
    s.failures += g.failures;
    s.degenerate += g.degenerate;
    s.pass_a1 += g.a1;
    s.pass_a2 += g.a2;
    s.pass_a3 += g.a3;
    s.pass_all += g.a1 && g.a2 && g.a3;
  }
  s.count = all.size();
  if (!all.empty()) {
    double sum = 0.0;
    for (double x : all) sum += x;
    s.mean = sum / static_cast<double>(all.size());
    s.max = *std::max_element(all.begin(), all.end());
    std::sort(all.begin(), all.end());
    const std::size_t h = all.size() / 2;
    s.median = all.size() % 2 ? all[h] : 0.5 * (all[h - 1] + all[h]);
  }
  cell.stats = s;
}

namespace detail {

inline std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

inline std::uint64_t cell_seed(const ExperimentConfig& cfg, double p, std::size_t n, double range) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.mode) + 11, bits(p), n, bits(range)});
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.p.empty()) throw ConfigError("p list is empty");
  for (double p : cfg.p) check_probability(p, "p");
  check_probability(cfg.extra_bidirected_p, "extra_bidirected_p");
  if (cfg.graphs == 0) throw ConfigError("graphs must be positive");
  if (cfg.mode != ExperimentMode::assumption_survey && cfg.runs_per_graph == 0) {
    throw ConfigError("runs_per_graph must be positive");
  }
  if (cfg.mode == ExperimentMode::simulated) {
    if (cfg.n.empty() || cfg.range.empty()) throw ConfigError("simulated mode needs n and range values");
    for (double r : cfg.range) {
      if (!(r > 0.0)) throw ConfigError("range must be positive");
    }
    if (cfg.samples < 2) throw ConfigError("samples must be at least 2");
  }
  if (cfg.mode == ExperimentMode::gene_style) {
    if (cfg.normalize.empty()) throw ConfigError("normalize list is empty");
    if (!(cfg.noise_eps >= 0.0)) throw ConfigError("noise_eps must be non-negative");
  }
}

}  // namespace detail

/// 118 x 13 observations from a fixed random LSEM; stands in for the gene-expression data.
inline Matrix synthetic_gene_dataset(std::uint64_t seed, std::size_t m = 118, std::size_t v = 13) {
  const std::uint64_t s = derive_seed(seed, {0x6e6500});
  const MixedGraph g = gen_random_bowfree_graph({v, 0.3, 0.1, 0, 0, s});
  const SDDNoiseConfig nc{1.0, s};
  const ParamSet params{gen_lambda_range(g, nc), gen_omega_sdd(g, nc)};
  return sample_observations(forward_map(g, params), m, s);
}

inline Matrix load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path) {
    Matrix x = io::read_matrix(*cfg.dataset_path, true);
    if (x.rows() < 2 || x.cols() < 1) {
      throw IngestionError("dataset must have at least 2 rows and 1 column, got " + std::to_string(x.rows()) + "x" +
                           std::to_string(x.cols()));
    }
    return x;
  }
  return synthetic_gene_dataset(cfg.seed);
}

namespace detail {

inline GraphOutcome simulated_graph(const ExperimentConfig& cfg, const ExperimentCell& cell, std::uint64_t gseed,
                                    std::size_t index) {
  GraphOutcome out;
  out.index = index;
  const MixedGraph g = gen_random_bowfree_graph({cell.n, cell.p, cfg.extra_bidirected_p, 0, 0, gseed});
  const SDDNoiseConfig nc{cell.range, derive_seed(gseed, {1})};
  const ParamSet params{gen_lambda_range(g, nc), gen_omega_sdd(g, nc)};
  const Covariance sigma = forward_map(g, params);
  for (std::size_t r = 0; r < cfg.runs_per_graph; ++r) {
    try {
      const Matrix x = sample_observations(sigma, cfg.samples, derive_seed(gseed, {2, r}));
      const Covariance est = sample_covariance(x);
      const RecoveryResult rec = recover_all(g, est);
      const double rs = relative_distance(sigma.sigma, est.sigma);
      if (rs == 0.0) {
        ++out.degenerate;
        continue;
      }
      out.ratios.push_back(relative_distance(params.lambda, rec.lambda_hat) / rs);
    } catch (const UndefinedDistanceError&) {
      ++out.degenerate;
    } catch (const NumericalError&) {
      ++out.failures;
    }
  }
  return out;
}

inline GraphOutcome gene_graph(const ExperimentConfig& cfg, const ExperimentCell& cell, const Matrix& x,
                               std::uint64_t gseed, std::size_t index) {
  GraphOutcome out;
  out.index = index;
  const auto v = static_cast<std::size_t>(x.cols());
  const MixedGraph g = gen_random_bowfree_graph({v, cell.p, cfg.extra_bidirected_p, 0, 0, gseed});
  const Covariance sigma = sample_covariance(x, cell.normalize);
  RecoveryResult base;
  try {
    base = recover_all(g, sigma);
  } catch (const NumericalError&) {
    out.failures = cfg.runs_per_graph;
    return out;
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < cfg.runs_per_graph; ++r) {
    Rng rng(derive_seed(gseed, {3, r}));
    Matrix xt = x;
    for (Index j = 0; j < xt.cols(); ++j) {
      for (Index i = 0; i < xt.rows(); ++i) xt(i, j) += cfg.noise_eps * noise(rng);
    }
    try {
      const Covariance pert = sample_covariance(xt, cell.normalize);
      const double rs = relative_distance(sigma.sigma, pert.sigma);
      if (rs == 0.0) {
        ++out.degenerate;
        continue;
      }
      const RecoveryResult rec = recover_all(g, pert);
      out.ratios.push_back(relative_distance(base.lambda_hat, rec.lambda_hat) / rs);
    } catch (const UndefinedDistanceError&) {
      ++out.degenerate;
    } catch (const NumericalError&) {
      ++out.failures;
    }
  }
  return out;
}

inline GraphOutcome survey_graph(const ExperimentConfig& cfg, const ExperimentCell& cell, const Covariance& sigma,
                                 std::uint64_t gseed, std::size_t index) {
  GraphOutcome out;
  out.index = index;
  const auto v = static_cast<std::size_t>(sigma.sigma.rows());
  const MixedGraph g = gen_random_bowfree_graph({v, cell.p, cfg.extra_bidirected_p, 0, 0, gseed});
  if (g.directed_edges().empty()) {
    out.a1 = out.a2 = out.a3 = out.vacuous = true;
    return out;
  }
  try {
    const RecoveryResult rec = recover_all(g, sigma);
    const AssumptionProfile prof = check_assumptions(g, sigma, rec.lambda_hat);
    out.a1 = prof.pass_a1;
    out.a2 = prof.pass_a2;
    out.a3 = prof.pass_a3;
  } catch (const NumericalError&) {
    out.failures = 1;
  }
  return out;
}

}  // namespace detail

/// Per-configuration condition-number estimates for the simulated SDD pipeline: exact Σ from
/// (Λ, Ω) versus the sample covariance of `samples` draws.
inline ExperimentReport run_simulated(const ExperimentConfig& cfg) {
  detail::validate_config(cfg);
  ExperimentReport rep;
  rep.config = cfg;
  for (double p : cfg.p) {
    for (std::size_t n : cfg.n) {
      for (double range : cfg.range) {
        ExperimentCell cell{p, n, range, false, {}, {}};
        const std::uint64_t cs = detail::cell_seed(cfg, p, n, range);
        for (std::size_t i = 0; i < cfg.graphs; ++i) {
          const std::size_t index = cfg.graph_offset + i;
          cell.graphs.push_back(detail::simulated_graph(cfg, cell, derive_seed(cs, {index}), index));
        }
        compute_stats(cell);
        rep.cells.push_back(std::move(cell));
      }
    }
  }
  return rep;
}

/// Data-perturbation condition numbers: Λ̂ from the dataset covariance versus Λ̃ from the
/// covariance of the dataset plus N(0, ε²) entrywise noise.
inline ExperimentReport run_gene_style(const ExperimentConfig& cfg) {
  detail::validate_config(cfg);
  const Matrix x = load_dataset(cfg);
  ExperimentReport rep;
  rep.config = cfg;
  rep.dataset_rows = static_cast<std::size_t>(x.rows());
  rep.dataset_cols = static_cast<std::size_t>(x.cols());
  for (double p : cfg.p) {
    for (bool norm : cfg.normalize) {
      ExperimentCell cell{p, rep.dataset_cols, 0.0, norm, {}, {}};
      const std::uint64_t cs = detail::cell_seed(cfg, p, rep.dataset_cols, 0.0);
      for (std::size_t i = 0; i < cfg.graphs; ++i) {
        const std::size_t index = cfg.graph_offset + i;
        cell.graphs.push_back(detail::gene_graph(cfg, cell, x, derive_seed(cs, {index}), index));
      }
      compute_stats(cell);
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

/// A.1-A.3 on random DAGs over the row-normalized dataset, with Λ̂ recovered per DAG.
inline ExperimentReport run_assumption_survey(const ExperimentConfig& cfg) {
  detail::validate_config(cfg);
  const Matrix x = load_dataset(cfg);
  const Covariance sigma = sample_covariance(x, true);
  ExperimentReport rep;
  rep.config = cfg;
  rep.dataset_rows = static_cast<std::size_t>(x.rows());
  rep.dataset_cols = static_cast<std::size_t>(x.cols());
  for (double p : cfg.p) {
    ExperimentCell cell{p, rep.dataset_cols, 0.0, true, {}, {}};
    const std::uint64_t cs = detail::cell_seed(cfg, p, rep.dataset_cols, 0.0);
    for (std::size_t i = 0; i < cfg.graphs; ++i) {
      const std::size_t index = cfg.graph_offset + i;
      cell.graphs.push_back(detail::survey_graph(cfg, cell, sigma, derive_seed(cs, {index}), index));
    }
    compute_stats(cell);
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.mode) {
    case ExperimentMode::gene_style: return run_gene_style(cfg);
    case ExperimentMode::simulated: return run_simulated(cfg);
    case ExperimentMode::assumption_survey: return run_assumption_survey(cfg);
  }
  throw ConfigError("unknown experiment mode");
}

/// Union of two reports over disjoint graph index ranges of the same configuration.
inline ExperimentReport merge_reports(const ExperimentReport& a, const ExperimentReport& b) {
  const auto& ca = a.config;
  const auto& cb = b.config;
  if (ca.mode != cb.mode || ca.p != cb.p || ca.n != cb.n || ca.range != cb.range || ca.normalize != cb.normalize ||
      ca.k != cb.k || ca.noise_eps != cb.noise_eps || ca.extra_bidirected_p != cb.extra_bidirected_p ||
      ca.runs_per_graph != cb.runs_per_graph || ca.samples != cb.samples || ca.seed != cb.seed ||
      ca.dataset_path != cb.dataset_path || a.cells.size() != b.cells.size()) {
    throw ConfigError("reports come from different configurations");
  }
  ExperimentReport out = a;
  out.config.graphs = ca.graphs + cb.graphs;
  out.config.graph_offset = std::min(ca.graph_offset, cb.graph_offset);
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    auto& cell = out.cells[i];
    const auto& other = b.cells[i];
    cell.graphs.insert(cell.graphs.end(), other.graphs.begin(), other.graphs.end());
    std::sort(cell.graphs.begin(), cell.graphs.end(),
              [](const GraphOutcome& x, const GraphOutcome& y) { return x.index < y.index; });
    for (std::size_t j = 1; j < cell.graphs.size(); ++j) {
      if (cell.graphs[j].index == cell.graphs[j - 1].index) throw ConfigError("reports overlap in graph indices");
    }
    compute_stats(cell);
  }
  return out;
}

namespace io {

inline json config_to_json(const ExperimentConfig& c) {
  json norm = json::array();
  for (bool b : c.normalize) norm.push_back(b);
  return json{{"mode", mode_name(c.mode)},
              {"dataset", c.dataset_path ? json(*c.dataset_path) : json(nullptr)},
              {"p", c.p},
              {"k", c.k},
              {"n", c.n},
              {"range", c.range},
              {"normalize", norm},
              {"noise_eps", c.noise_eps},
              {"extra_bidirected_p", c.extra_bidirected_p},
              {"graphs", c.graphs},
              {"graph_offset", c.graph_offset},
              {"runs_per_graph", c.runs_per_graph},
              {"samples", c.samples},
              {"seed", c.seed}};
}

inline json report_to_json(const ExperimentReport& r) {
  const bool survey = r.config.mode == ExperimentMode::assumption_survey;
  json cells = json::array();
  for (const auto& c : r.cells) {
    json graphs = json::array();
    for (const auto& g : c.graphs) {
      json gj{{"index", g.index}};
      if (survey) {
        gj["a1"] = g.a1;
        gj["a2"] = g.a2;
        gj["a3"] = g.a3;
        gj["vacuous"] = g.vacuous;
        gj["failures"] = g.failures;
      } else {
        json ratios = json::array();
        for (double x : g.ratios) ratios.push_back(number(x));
        gj["ratios"] = ratios;
        gj["failures"] = g.failures;
        gj["degenerate"] = g.degenerate;
      }
      graphs.push_back(gj);
    }
    json cj{{"p", c.p}};
    if (r.config.mode == ExperimentMode::simulated) {
      cj["k"] = r.config.k;
      cj["n"] = c.n;
      cj["range"] = c.range;
    } else {
      cj["n"] = c.n;
      cj["normalize"] = c.normalize;
    }
    const auto& s = c.stats;
    if (survey) {
      cj["graphs_checked"] = c.graphs.size();
      cj["pass_a1"] = s.pass_a1;
      cj["pass_a2"] = s.pass_a2;
      cj["pass_a3"] = s.pass_a3;
      cj["pass_all"] = s.pass_all;
      cj["failures"] = s.failures;
    } else {
      cj["count"] = s.count;
      cj["mean"] = number(s.mean);
      cj["median"] = number(s.median);
      cj["max"] = number(s.max);
      cj["failures"] = s.failures;
      cj["degenerate"] = s.degenerate;
    }
    cj["graphs"] = graphs;
    cells.push_back(cj);
  }
  json out{{"schema", 1}, {"mode", mode_name(r.config.mode)}, {"config", config_to_json(r.config)}};
  if (r.config.mode != ExperimentMode::simulated) out["dataset_shape"] = json::array({r.dataset_rows, r.dataset_cols});
  out["cells"] = cells;
  return out;
}

/// Data for plotting mean κ̂ against p.
inline std::string report_plot_csv(const ExperimentReport& r) {
  std::string out = "p,n,range,normalize,mean_kappa\n";
  for (const auto& c : r.cells) {
    out += format_double(c.p) + ',' + std::to_string(c.n) + ',' + format_double(c.range) + ',' +
           (c.normalize ? "1" : "0") + ',' + format_double(c.stats.mean) + '\n';
  }
  return out;
}

}  // namespace io

}  // namespace lsem
