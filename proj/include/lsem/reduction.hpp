#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lsem/error.hpp"
#include "lsem/linalg.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/mixed_graph.hpp"
#include "lsem/recovery.hpp"

namespace lsem {

/// Hands out consecutive vertex ids.
class IdAllocator {
 public:
  explicit IdAllocator(std::size_t first, std::size_t capacity = std::numeric_limits<std::size_t>::max())
      : next_(first), capacity_(capacity) {}

  VertexId allocate() {
    if (next_ >= capacity_) throw CapacityError("vertex id capacity " + std::to_string(capacity_) + " exhausted");
    return next_++;
  }
  [[nodiscard]] std::size_t next() const noexcept { return next_; }

 private:
  std::size_t next_;
  std::size_t capacity_;
};

/// (q, r) directed-path gadget replacing head -> tail: head -> R_1 -> ... -> R_q -> collector -> tail,
/// |R_i| = r for i < q, |R_q| = r², adjacent stages fully connected with forced weight 1/r.
/// With q = 0 the head feeds the collector directly through a forced weight-1 edge.
struct GadgetSpec {
  VertexId head = 0;
  VertexId tail = 0;
  VertexId collector = 0;
  std::size_t q = 0;
  std::size_t r = 1;
  std::vector<VertexList> inner_layers;

  [[nodiscard]] std::size_t added_vertices() const {
    std::size_t c = 1;
    for (const auto& l : inner_layers) c += l.size();
    return c;
  }

  /// All gadget edges; only collector -> tail is unforced.
  [[nodiscard]] std::vector<DirectedEdge> edges() const {
    std::vector<DirectedEdge> out;
    const double w = 1.0 / static_cast<double>(r);
    VertexList prev{head};
    for (const auto& layer : inner_layers) {
      for (VertexId a : prev) {
        for (VertexId b : layer) out.push_back({a, b, w});
      }
      prev = layer;
    }
    const double last = inner_layers.empty() ? 1.0 : w;
    for (VertexId a : prev) out.push_back({a, collector, last});
    out.push_back({collector, tail, std::nullopt});
    return out;
  }
};

inline GadgetSpec build_gadget(VertexId u, VertexId v, std::size_t q, std::size_t r, IdAllocator& ids) {
  if (r == 0) throw ConfigError("gadget width r must be at least 1");
  GadgetSpec g;
  g.head = u;
  g.tail = v;
  g.q = q;
  g.r = r;
  for (std::size_t i = 1; i <= q; ++i) {
    const std::size_t width = i == q ? r * r : r;
    VertexList layer;
    layer.reserve(width);
    for (std::size_t j = 0; j < width; ++j) layer.push_back(ids.allocate());
    g.inner_layers.push_back(std::move(layer));
  }
  g.collector = ids.allocate();
  return g;
}

/// Smallest integer r with r² ≥ n.
inline std::size_t ceil_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r < n) ++r;
  while (r > 0 && (r - 1) * (r - 1) >= n) --r;
  return r;
}

struct CollectorCrossCheck {
  std::size_t differing_entries = 0;  // entries where the literal 1/r collector rule differs
  double max_abs_difference = 0.0;
  VertexList collectors;              // collectors whose rows differ
};

struct ReductionOutput {
  MixedGraph g_prime;
  std::optional<Covariance> sigma_prime;
  VertexList old_to_new;              // identity embedding
  std::vector<GadgetSpec> gadgets;
  std::size_t r = 1;
  std::size_t k_layers = 0;
  std::size_t n_original = 0;
  std::vector<VertexId> head_of;      // vertex of G whose variable determines each vertex of G'
  std::vector<double> factor_of;      // coefficient of that head variable
  CollectorCrossCheck cross_check;
};

/// Replaces each edge spanning s ≥ 2 layers by a (s - 2, ⌈√n⌉) gadget whose collector sits
/// one layer above the tail, then links each collector bidirectionally to every sibling of its
/// head or tail.
inline ReductionOutput reduce_graph(const MixedGraph& g) {
  require_bow_free(g);
  const auto layers = layer_decomposition(g);
  const std::size_t n = g.size();
  ReductionOutput out;
  out.n_original = n;
  out.r = std::max<std::size_t>(1, ceil_sqrt(n));
  out.old_to_new.resize(n);
  for (VertexId v = 0; v < n; ++v) out.old_to_new[v] = v;

  IdAllocator ids(n);
  std::vector<DirectedEdge> kept;
  for (const auto& e : g.sorted_directed_edges()) {
    const int span = layers.layer_of[e.target] - layers.layer_of[e.source];
    if (span <= 1) {
      kept.push_back(e);
      continue;
    }
    out.gadgets.push_back(build_gadget(e.source, e.target, static_cast<std::size_t>(span - 2), out.r, ids));
  }
  MixedGraph gp(ids.next());
  for (const auto& e : kept) gp.add_directed(e.source, e.target, e.forced_weight);
  for (const auto& gd : out.gadgets) {
    for (const auto& e : gd.edges()) gp.add_directed(e.source, e.target, e.forced_weight);
  }
  for (const auto& [a, b] : g.bidirected_edges()) gp.add_bidirected(a, b);
  for (const auto& gd : out.gadgets) {
    for (VertexId x : {gd.head, gd.tail}) {
      for (VertexId w : g.siblings(x)) gp.add_bidirected(gd.collector, w);
    }
  }

  out.head_of.resize(gp.size());
  out.factor_of.assign(gp.size(), 1.0);
  for (VertexId v = 0; v < n; ++v) out.head_of[v] = v;
  for (const auto& gd : out.gadgets) {
    for (const auto& layer : gd.inner_layers) {
      for (VertexId x : layer) {
        out.head_of[x] = gd.head;
        out.factor_of[x] = 1.0 / static_cast<double>(gd.r);
      }
    }
    out.head_of[gd.collector] = gd.head;
  }
  out.g_prime = std::move(gp);
  out.k_layers = static_cast<std::size_t>(layer_decomposition(out.g_prime).count());
  return out;
}

/// Σ′(a, b) = f(a)·f(b)·Σ(h(a), h(b)) where h is the head variable and f its coefficient
/// (1 for original vertices and collectors, 1/r for inner vertices). Also records where the
/// literal rule giving collectors the factor 1/r would differ.
inline Covariance reduce_covariance(const MixedGraph& g, const Covariance& sigma, ReductionOutput& red) {
  require_square(sigma.sigma, g.size(), "sigma");
  const auto np = static_cast<Index>(red.g_prime.size());
  const auto heads = to_index_list(red.head_of);
  const Vector f = Eigen::Map<const Vector>(red.factor_of.data(), np);
  Matrix sp = f.asDiagonal() * sigma.sigma(heads, heads) * f.asDiagonal();

  Vector lit = f;
  for (const auto& gd : red.gadgets) lit(static_cast<Index>(gd.collector)) = 1.0 / static_cast<double>(gd.r);
  CollectorCrossCheck cc;
  for (const auto& gd : red.gadgets) {
    if (gd.r != 1) cc.collectors.push_back(gd.collector);
  }
  std::sort(cc.collectors.begin(), cc.collectors.end());
  if (!cc.collectors.empty()) {
    const Matrix literal = lit.asDiagonal() * sigma.sigma(heads, heads) * lit.asDiagonal();
    const Matrix diff = (literal - sp).cwiseAbs();
    for (Index i = 0; i < np; ++i) {
      for (Index j = 0; j < np; ++j) {
        if (diff(i, j) > 0.0) ++cc.differing_entries;
      }
    }
    cc.max_abs_difference = diff.maxCoeff();
  }
  red.cross_check = cc;
  Covariance out = Covariance::exact(symmetrize(sp));
  out.provenance = sigma.provenance;
  out.samples = sigma.samples;
  out.gamma = sigma.gamma;
  red.sigma_prime = out;
  return out;
}

inline ReductionOutput reduce(const MixedGraph& g, const Covariance& sigma) {
  ReductionOutput red = reduce_graph(g);
  reduce_covariance(g, sigma, red);
  return red;
}

struct ReductionVerification {
  bool bow_free = false;
  bool layered = false;
  bool size_bounds = false;
  bool weights_match = false;
  bool systems_match = false;
  std::vector<std::string> failures;

  [[nodiscard]] bool pass() const { return bow_free && layered && size_bounds && weights_match && systems_match; }
};

namespace detail {

// Λ of G written into G′: kept edges copy, each gadget's collector -> tail takes the skip weight.
inline Matrix embed_lambda(const MixedGraph& g, const Matrix& lambda, const ReductionOutput& red) {
  const auto np = static_cast<Index>(red.g_prime.size());
  Matrix out = Matrix::Zero(np, np);
  for (const auto& e : red.g_prime.directed_edges()) {
    if (e.forced_weight) out(static_cast<Index>(e.source), static_cast<Index>(e.target)) = *e.forced_weight;
  }
  for (const auto& e : g.directed_edges()) {
    if (red.g_prime.has_directed(e.source, e.target)) {
      out(static_cast<Index>(e.source), static_cast<Index>(e.target)) =
          lambda(static_cast<Index>(e.source), static_cast<Index>(e.target));
    }
  }
  for (const auto& gd : red.gadgets) {
    out(static_cast<Index>(gd.collector), static_cast<Index>(gd.tail)) =
        lambda(static_cast<Index>(gd.head), static_cast<Index>(gd.tail));
  }
  return out;
}

// Parent of v in G′ standing in for parent p of v in G.
inline VertexId proxy_parent(const ReductionOutput& red, VertexId p, VertexId v) {
  for (const auto& gd : red.gadgets) {
    if (gd.head == p && gd.tail == v) return gd.collector;
  }
  return p;
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(a)); }

}  // namespace detail

/// Checks (a) bow-free, (b) layered, (c) k ≤ n² and n′ ≤ n⁶, (d) recovered collector -> tail
/// weights equal the recovered skip weights of G, (e) per-vertex systems of original vertices
/// agree entrywise between G and G′.
inline ReductionVerification verify_reduction(const MixedGraph& g, const Covariance& sigma, const ReductionOutput& red,
                                              double tol = 1e-8, double system_tol = 1e-10) {
  ReductionVerification rep;
  const MixedGraph& gp = red.g_prime;
  rep.bow_free = validate_bow_free(gp).pass;
  if (!rep.bow_free) rep.failures.push_back("(a) reduced graph is not bow-free");
  rep.layered = check_k_layered(gp);
  if (!rep.layered) rep.failures.push_back("(b) reduced graph is not layered");
  const double n = static_cast<double>(g.size());
  rep.size_bounds = static_cast<double>(red.k_layers) <= n * n && static_cast<double>(gp.size()) <= std::pow(n, 6.0);
  if (!rep.size_bounds) {
    rep.failures.push_back("(c) size bounds violated: layers " + std::to_string(red.k_layers) + ", vertices " +
                           std::to_string(gp.size()));
  }
  if (!red.sigma_prime) {
    rep.failures.push_back("(d)/(e) reduced covariance missing");
    return rep;
  }

  RecoveryResult base, reduced;
  try {
    base = recover_all(g, sigma);
    reduced = recover_all(gp, *red.sigma_prime);
  } catch (const Error& e) {
    rep.failures.push_back(std::string("(d) recovery failed: ") + e.what());
    return rep;
  }
  rep.weights_match = true;
  for (const auto& e : g.sorted_directed_edges()) {
    const VertexId src = detail::proxy_parent(red, e.source, e.target);
    const double want = base.lambda_hat(static_cast<Index>(e.source), static_cast<Index>(e.target));
    const double got = reduced.lambda_hat(static_cast<Index>(src), static_cast<Index>(e.target));
    if (!detail::close(want, got, tol)) {
      rep.weights_match = false;
      std::ostringstream os;
      os << "(d) edge " << e.source + 1 << "->" << e.target + 1 << ": G gives " << want << ", G' gives " << got;
      rep.failures.push_back(os.str());
    }
  }

  rep.systems_match = true;
  const PartialLambda lam = PartialLambda::complete(base.lambda_hat);
  const PartialLambda lam_p = PartialLambda::complete(detail::embed_lambda(g, base.lambda_hat, red));
  for (VertexId v = 0; v < g.size(); ++v) {
    if (g.parents(v).empty()) continue;
    RecoverySystem s, sp;
    try {
      s = build_system(g, sigma, lam, v);
      sp = build_system(gp, *red.sigma_prime, lam_p, v);
    } catch (const Error& e) {
      rep.systems_match = false;
      rep.failures.push_back("(e) vertex " + std::to_string(v + 1) + ": " + e.what());
      continue;
    }
    // Column/row order of G′'s system, expressed in G's unknown order.
    std::vector<Index> perm;
    for (VertexId p : s.unknowns) {
      const VertexId q = detail::proxy_parent(red, p, v);
      const auto it = std::find(sp.unknowns.begin(), sp.unknowns.end(), q);
      if (it == sp.unknowns.end()) {
        perm.clear();
        break;
      }
      perm.push_back(static_cast<Index>(it - sp.unknowns.begin()));
    }
    if (perm.size() != s.unknowns.size() || sp.unknowns.size() != s.unknowns.size()) {
      rep.systems_match = false;
      rep.failures.push_back("(e) vertex " + std::to_string(v + 1) + ": unknown sets differ");
      continue;
    }
    const Matrix ap = sp.a(perm, perm);
    const Vector bp = sp.b(perm);
    const double scale = std::max(1.0, std::max(s.a.cwiseAbs().maxCoeff(), s.b.cwiseAbs().maxCoeff()));
    for (Index i = 0; i < ap.rows(); ++i) {
      for (Index j = 0; j <= ap.cols(); ++j) {
        const double x = j < ap.cols() ? s.a(i, j) : s.b(i);
        const double y = j < ap.cols() ? ap(i, j) : bp(i);
        if (std::abs(x - y) > system_tol * scale) {
          rep.systems_match = false;
          std::ostringstream os;
          os << "(e) vertex " << v + 1 << ": " << (j < ap.cols() ? "A" : "b") << "(" << i + 1;
          if (j < ap.cols()) os << "," << j + 1;
          os << ") is " << x << " in G but " << y << " in G'";
          rep.failures.push_back(os.str());
        }
      }
    }
  }
  return rep;
}

}  // namespace lsem
