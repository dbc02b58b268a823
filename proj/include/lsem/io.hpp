#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/mixed_graph.hpp"
#include "lsem/recovery.hpp"
#include "lsem/reduction.hpp"
#include "lsem/robustness.hpp"

namespace lsem::io {

using json = nlohmann::ordered_json;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
  if (!out) throw IngestionError("write failed for " + path.string());
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw IngestionError(what + ": " + e.what());
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Non-finite values have no JSON literal; they are written as null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// ---- graphs ---------------------------------------------------------------------------------

inline json graph_to_json(const MixedGraph& g) {
  json dir = json::array();
  for (const auto& e : g.sorted_directed_edges()) {
    json edge = json::array({e.source + 1, e.target + 1});
    if (e.forced_weight) edge.push_back(*e.forced_weight);
    dir.push_back(edge);
  }
  json bi = json::array();
  for (const auto& [a, b] : g.bidirected_edges()) bi.push_back(json::array({a + 1, b + 1}));
  return json{{"n", g.size()}, {"directed", dir}, {"bidirected", bi}};
}

namespace detail {

inline VertexId vertex_from_json(const json& x, std::size_t n) {
  if (!x.is_number_integer()) throw IngestionError("vertex ids must be integers");
  const auto v = x.get<long long>();
  if (v < 1 || static_cast<std::size_t>(v) > n) {
    throw StructuralError("vertex " + std::to_string(v) + " out of range 1.." + std::to_string(n));
  }
  return static_cast<VertexId>(v - 1);
}

}  // namespace detail

inline MixedGraph graph_from_json(const json& j) {
  if (!j.is_object() || !j.contains("n") || !j["n"].is_number_integer() || j["n"].get<long long>() < 0) {
    throw IngestionError("graph JSON needs a non-negative integer \"n\"");
  }
  const auto n = j["n"].get<std::size_t>();
  MixedGraph g(n);
  if (j.contains("directed")) {
    if (!j["directed"].is_array()) throw IngestionError("\"directed\" must be an array");
    for (const auto& e : j["directed"]) {
      if (!e.is_array() || (e.size() != 2 && e.size() != 3)) {
        throw IngestionError("directed edges are [u, v] or [u, v, weight]");
      }
      std::optional<double> w;
      if (e.size() == 3) {
        if (!e[2].is_number()) throw IngestionError("forced weight must be a number");
        w = e[2].get<double>();
      }
      g.add_directed(detail::vertex_from_json(e[0], n), detail::vertex_from_json(e[1], n), w);
    }
  }
  if (j.contains("bidirected")) {
    if (!j["bidirected"].is_array()) throw IngestionError("\"bidirected\" must be an array");
    for (const auto& e : j["bidirected"]) {
      if (!e.is_array() || e.size() != 2) throw IngestionError("bidirected edges are [u, v]");
      g.add_bidirected(detail::vertex_from_json(e[0], n), detail::vertex_from_json(e[1], n));
    }
  }
  return g;
}

inline MixedGraph read_graph(const std::filesystem::path& p) {
  return graph_from_json(parse_json(read_text(p), p.string()));
}

inline void write_graph(const std::filesystem::path& p, const MixedGraph& g) { write_text(p, dump(graph_to_json(g))); }

// ---- matrices -------------------------------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw IngestionError("matrix must be an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows == 0 ? 0 : static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw IngestionError("matrix rows are ragged");
    for (Index c = 0; c < cols; ++c) {
      const auto& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) throw IngestionError("matrix entries must be numbers");
      m(i, c) = x.get<double>();
    }
  }
  return m;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Row-major, headerless, full round-trip precision.
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(std::string s, double& out) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = s.find_first_not_of(" \t");
  if (start == std::string::npos) return false;
  s = s.substr(start);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

/// Parses a numeric CSV. With allow_header, a first line that does not parse is skipped.
inline Matrix matrix_from_csv(const std::string& text, bool allow_header = false) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    bool ok = true;
    for (const auto& cell : detail::split_csv_line(line)) {
      double x = 0.0;
      if (!detail::parse_double(cell, x)) {
        ok = false;
        break;
      }
      row.push_back(x);
    }
    if (!ok) {
      if (allow_header && rows.empty() && lineno == 1) continue;
      throw IngestionError("non-numeric CSV cell on line " + std::to_string(lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IngestionError("CSV line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                           " columns, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  const auto r = static_cast<Index>(rows.size());
  const Index c = r == 0 ? 0 : static_cast<Index>(rows.front().size());
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

inline Matrix read_matrix(const std::filesystem::path& p, bool allow_header = false) {
  const std::string text = read_text(p);
  if (p.extension() == ".json") return matrix_from_json(parse_json(text, p.string()));
  return matrix_from_csv(text, allow_header);
}

inline void write_matrix_csv(const std::filesystem::path& p, const Matrix& m) { write_text(p, matrix_to_csv(m)); }

inline void write_matrix(const std::filesystem::path& p, const Matrix& m) {
  if (p.extension() == ".json") {
    write_text(p, dump(matrix_to_json(m)));
  } else {
    write_matrix_csv(p, m);
  }
}

/// Σ from CSV or JSON, required square and symmetric to 1e-10 relative.
inline Covariance read_covariance(const std::filesystem::path& p) {
  Matrix s = read_matrix(p);
  if (s.rows() != s.cols()) throw ShapeError("covariance must be square");
  const double scale = std::max(1.0, s.size() ? s.cwiseAbs().maxCoeff() : 0.0);
  if (s.size() && (s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ShapeError("covariance is not symmetric");
  }
  return Covariance::exact(symmetrize(s));
}

// ---- parameters -----------------------------------------------------------------------------

inline json params_to_json(const ParamSet& p) {
  return json{{"lambda", matrix_to_json(p.lambda)}, {"omega", matrix_to_json(p.omega)}};
}

inline ParamSet params_from_json(const json& j) {
  if (!j.is_object() || !j.contains("lambda") || !j.contains("omega")) {
    throw IngestionError("parameter JSON needs \"lambda\" and \"omega\"");
  }
  return {matrix_from_json(j["lambda"]), matrix_from_json(j["omega"])};
}

inline ParamSet read_params(const std::filesystem::path& p) { return params_from_json(parse_json(read_text(p), p.string())); }

// ---- results --------------------------------------------------------------------------------

inline json recovery_to_json(const RecoveryResult& r) {
  json diag = json::object();
  for (const auto& [v, d] : r.per_vertex) {
    diag[std::to_string(v + 1)] = json{{"residual", number(d.residual)},
                                       {"condition", number(d.condition)},
                                       {"partial_form", d.partial_form},
                                       {"convention_disagrees", d.convention_disagrees}};
  }
  return json{{"lambda", matrix_to_json(r.lambda_hat)},
              {"forced_edges_respected", r.forced_edges_respected},
              {"diagnostics", diag}};
}

inline json profile_to_json(const AssumptionProfile& p) {
  json per = json::object();
  for (const auto& [v, a] : p.per_vertex) {
    per[std::to_string(v + 1)] = json{{"kappa", number(a.kappa)},
                                      {"alpha_ratios", json::array({number(a.alpha_ratios[0]), number(a.alpha_ratios[1]),
                                                                    number(a.alpha_ratios[2])})},
                                      {"beta", number(a.beta_v)},
                                      {"min_weight", number(a.min_weight)},
                                      {"singular", a.singular},
                                      {"a1", a.pass_a1},
                                      {"a2", a.pass_a2},
                                      {"a3", a.pass_a3}};
  }
  return json{{"alpha", number(p.alpha)},   {"beta", number(p.beta)},       {"kappa0", number(p.kappa0)},
              {"lambda_floor", number(p.lambda_floor)}, {"k", p.k},        {"gamma", number(p.gamma)},
              {"a1", p.pass_a1},            {"a2", p.pass_a2},              {"a3", p.pass_a3},
              {"per_vertex", per}};
}

inline json premise_to_json(const PremiseReport& r) {
  return json{{"first", number(r.first)},   {"first_ok", r.first_ok},
              {"second", number(r.second)}, {"second_limit", number(r.second_limit)},
              {"second_ok", r.second_ok},   {"holds", r.holds}};
}

inline std::string trials_to_csv(const ConditionEstimate& est) {
  std::string out = "gamma_index,gamma,trial,ok,rel_sigma,rel_lambda,ratio\n";
  for (const auto& r : est.records) {
    out += std::to_string(r.gamma_index) + ',' + format_double(r.gamma) + ',' + std::to_string(r.trial) + ',' +
           (r.ok ? "1" : "0") + ',' + format_double(r.rel_sigma) + ',' + format_double(r.rel_lambda) + ',' +
           format_double(r.ratio) + '\n';
  }
  return out;
}

inline json gadget_to_json(const GadgetSpec& g) {
  json layers = json::array();
  for (const auto& l : g.inner_layers) {
    json ids = json::array();
    for (VertexId v : l) ids.push_back(v + 1);
    layers.push_back(ids);
  }
  return json{{"head", g.head + 1}, {"tail", g.tail + 1}, {"collector", g.collector + 1},
              {"q", g.q},           {"r", g.r},           {"inner_layers", layers}};
}

inline json reduction_manifest(const ReductionOutput& red, const ReductionVerification* ver = nullptr) {
  json gadgets = json::array();
  for (const auto& g : red.gadgets) gadgets.push_back(gadget_to_json(g));
  json old_to_new = json::array();
  for (VertexId v : red.old_to_new) old_to_new.push_back(v + 1);
  json collectors = json::array();
  for (VertexId v : red.cross_check.collectors) collectors.push_back(v + 1);
  json m{{"schema", 1},
         {"n", red.n_original},
         {"n_prime", red.g_prime.size()},
         {"r", red.r},
         {"layers", red.k_layers},
         {"old_to_new", old_to_new},
         {"gadgets", gadgets},
         {"collector_cross_check",
          json{{"differing_entries", red.cross_check.differing_entries},
               {"max_abs_difference", number(red.cross_check.max_abs_difference)},
               {"collectors", collectors}}}};
  if (ver) {
    json failures = json::array();
    for (const auto& f : ver->failures) failures.push_back(f);
    m["verification"] = json{{"bow_free", ver->bow_free},         {"layered", ver->layered},
                             {"size_bounds", ver->size_bounds},   {"weights_match", ver->weights_match},
                             {"systems_match", ver->systems_match}, {"pass", ver->pass()},
                             {"failures", failures}};
  }
  return m;
}

}  // namespace lsem::io
