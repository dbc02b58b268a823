#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lsem/error.hpp"

namespace lsem {

/// Dense 0-based vertex index. Serialized formats are 1-based.
using VertexId = std::size_t;
using VertexList = std::vector<VertexId>;
using VertexPair = std::pair<VertexId, VertexId>;

struct DirectedEdge {
  VertexId source = 0;
  VertexId target = 0;
  /// Set only on edges introduced by the reduction; recovery treats these weights as known.
  std::optional<double> forced_weight;

  friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;
};

/// G = (V, E, F): directed edges E (with optional forced weights) and bidirected edges F.
///
/// Construction checks indices and self-loops only; acyclicity and bow-freeness are
/// properties queried through topological_order() and validate_bow_free(). Adjacency
/// lists are kept sorted so every query is deterministic.
class MixedGraph {
 public:
  MixedGraph() = default;
  explicit MixedGraph(std::size_t n) : n_(n), parents_(n), children_(n), siblings_(n) {}

  MixedGraph(std::size_t n, const std::vector<DirectedEdge>& directed,
             const std::vector<VertexPair>& bidirected)
      : MixedGraph(n) {
    for (const auto& e : directed) add_directed(e.source, e.target, e.forced_weight);
    for (const auto& [a, b] : bidirected) add_bidirected(a, b);
  }

  void add_directed(VertexId u, VertexId v, std::optional<double> forced_weight = std::nullopt) {
    check_pair(u, v, "directed");
    if (edge_index_.count({u, v}) != 0) {
      throw StructuralError("duplicate directed edge " + pair_str(u, v));
    }
    edge_index_[{u, v}] = directed_.size();
    directed_.push_back({u, v, forced_weight});
    insert_sorted(parents_[v], u);
    insert_sorted(children_[u], v);
  }

  void add_bidirected(VertexId a, VertexId b) {
    check_pair(a, b, "bidirected");
    const VertexPair key = canonical(a, b);
    if (!bidirected_.insert(key).second) return;
    insert_sorted(siblings_[a], b);
    insert_sorted(siblings_[b], a);
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] const std::vector<DirectedEdge>& directed_edges() const noexcept { return directed_; }
  [[nodiscard]] const std::set<VertexPair>& bidirected_edges() const noexcept { return bidirected_; }

  /// Directed edges ordered by (source, target).
  [[nodiscard]] std::vector<DirectedEdge> sorted_directed_edges() const {
    std::vector<DirectedEdge> out;
    out.reserve(directed_.size());
    for (const auto& [key, idx] : edge_index_) out.push_back(directed_[idx]);
    return out;
  }

  [[nodiscard]] const VertexList& parents(VertexId v) const { return parents_.at(checked(v)); }
  [[nodiscard]] const VertexList& children(VertexId v) const { return children_.at(checked(v)); }
  [[nodiscard]] const VertexList& siblings(VertexId v) const { return siblings_.at(checked(v)); }

  [[nodiscard]] bool has_directed(VertexId u, VertexId v) const { return edge_index_.count({u, v}) != 0; }
  [[nodiscard]] bool adjacent_directed(VertexId u, VertexId v) const {
    return has_directed(u, v) || has_directed(v, u);
  }
  [[nodiscard]] bool has_bidirected(VertexId a, VertexId b) const {
    return bidirected_.count(canonical(a, b)) != 0;
  }

  [[nodiscard]] std::optional<double> forced_weight(VertexId u, VertexId v) const {
    auto it = edge_index_.find({u, v});
    if (it == edge_index_.end()) return std::nullopt;
    return directed_[it->second].forced_weight;
  }

  [[nodiscard]] bool has_forced_edges() const {
    return std::any_of(directed_.begin(), directed_.end(),
                       [](const DirectedEdge& e) { return e.forced_weight.has_value(); });
  }

  /// Parents whose incoming edge weight is not forced.
  [[nodiscard]] VertexList free_parents(VertexId v) const {
    VertexList out;
    for (VertexId p : parents(v)) {
      if (!forced_weight(p, v)) out.push_back(p);
    }
    return out;
  }

  [[nodiscard]] VertexList forced_parents(VertexId v) const {
    VertexList out;
    for (VertexId p : parents(v)) {
      if (forced_weight(p, v)) out.push_back(p);
    }
    return out;
  }

  /// A vertex whose incoming edges are all forced: its value is a fixed linear function of
  /// its parents (gadget inner vertices and collectors).
  [[nodiscard]] bool is_deterministic(VertexId v) const {
    const auto& pa = parents(v);
    return !pa.empty() && std::all_of(pa.begin(), pa.end(), [&](VertexId p) {
      return forced_weight(p, v).has_value();
    });
  }

  static VertexPair canonical(VertexId a, VertexId b) { return a < b ? VertexPair{a, b} : VertexPair{b, a}; }

  friend bool operator==(const MixedGraph& a, const MixedGraph& b) {
    return a.n_ == b.n_ && a.sorted_directed_edges() == b.sorted_directed_edges() &&
           a.bidirected_ == b.bidirected_;
  }

 private:
  static std::string pair_str(VertexId u, VertexId v) {
    std::ostringstream os;
    os << "(" << u + 1 << "," << v + 1 << ")";
    return os.str();
  }

  VertexId checked(VertexId v) const {
    if (v >= n_) {
      throw StructuralError("vertex " + std::to_string(v + 1) + " out of range 1.." + std::to_string(n_));
    }
    return v;
  }

  void check_pair(VertexId a, VertexId b, const char* kind) const {
    checked(a);
    checked(b);
    if (a == b) throw StructuralError(std::string("self-loop on ") + kind + " edge " + pair_str(a, b));
  }

  static void insert_sorted(VertexList& list, VertexId v) {
    list.insert(std::lower_bound(list.begin(), list.end(), v), v);
  }

  std::size_t n_ = 0;
  std::vector<DirectedEdge> directed_;
  std::map<VertexPair, std::size_t> edge_index_;
  std::set<VertexPair> bidirected_;
  std::vector<VertexList> parents_;
  std::vector<VertexList> children_;
  std::vector<VertexList> siblings_;
};

struct BowFreeReport {
  bool pass = true;
  std::vector<VertexPair> violations;  // canonical pairs carrying both edge kinds
};

inline BowFreeReport validate_bow_free(const MixedGraph& g) {
  BowFreeReport rep;
  for (const auto& [a, b] : g.bidirected_edges()) {
    if (g.adjacent_directed(a, b)) rep.violations.emplace_back(a, b);
  }
  rep.pass = rep.violations.empty();
  return rep;
}

inline void require_bow_free(const MixedGraph& g) {
  auto rep = validate_bow_free(g);
  if (!rep.pass) {
    const auto [a, b] = rep.violations.front();
    throw PatternError("graph is not bow-free: vertices " + std::to_string(a + 1) + " and " +
                       std::to_string(b + 1) + " share a directed and a bidirected edge");
  }
}

namespace detail {

// One directed cycle among the vertices Kahn's algorithm could not order.
inline VertexList find_cycle(const MixedGraph& g, const std::vector<bool>& stuck) {
  const std::size_t n = g.size();
  std::vector<int> color(n, 0);
  std::vector<VertexId> parent(n, n);
  VertexList cycle;
  std::function<bool(VertexId)> dfs = [&](VertexId u) {
    color[u] = 1;
    for (VertexId w : g.children(u)) {
      if (!stuck[w]) continue;
      if (color[w] == 1) {
        cycle.push_back(w);
        for (VertexId x = u; x != w; x = parent[x]) cycle.push_back(x);
        std::reverse(cycle.begin(), cycle.end());
        return true;
      }
      if (color[w] == 0) {
        parent[w] = u;
        if (dfs(w)) return true;
      }
    }
    color[u] = 2;
    return false;
  };
  for (VertexId v = 0; v < n; ++v) {
    if (stuck[v] && color[v] == 0 && dfs(v)) break;
  }
  return cycle;
}

}  // namespace detail

/// Kahn's algorithm with a min-heap: ties go to the smallest index.
inline VertexList topological_order(const MixedGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> indeg(n);
  std::priority_queue<VertexId, std::vector<VertexId>, std::greater<>> ready;
  for (VertexId v = 0; v < n; ++v) {
    indeg[v] = g.parents(v).size();
    if (indeg[v] == 0) ready.push(v);
  }
  VertexList order;
  order.reserve(n);
  while (!ready.empty()) {
    VertexId u = ready.top();
    ready.pop();
    order.push_back(u);
    for (VertexId w : g.children(u)) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  if (order.size() != n) {
    std::vector<bool> stuck(n, true);
    for (VertexId v : order) stuck[v] = false;
    const VertexList cycle = detail::find_cycle(g, stuck);
    std::ostringstream os;
    os << "directed edges contain a cycle:";
    for (VertexId v : cycle) os << ' ' << v + 1 << " ->";
    if (!cycle.empty()) os << ' ' << cycle.front() + 1;
    throw AcyclicityError(os.str());
  }
  return order;
}

struct LayerDecomposition {
  std::vector<int> layer_of;                // 1-based layer per vertex
  std::map<int, VertexList> layers;         // layer -> sorted vertices

  [[nodiscard]] int count() const { return layers.empty() ? 0 : layers.rbegin()->first; }
};

/// layer(v) = 1 + max layer over parents; parentless vertices sit in layer 1.
inline LayerDecomposition layer_decomposition(const MixedGraph& g) {
  LayerDecomposition out;
  out.layer_of.assign(g.size(), 1);
  for (VertexId v : topological_order(g)) {
    for (VertexId p : g.parents(v)) out.layer_of[v] = std::max(out.layer_of[v], out.layer_of[p] + 1);
  }
  for (VertexId v = 0; v < g.size(); ++v) out.layers[out.layer_of[v]].push_back(v);
  return out;
}

inline const VertexList& parents(const MixedGraph& g, VertexId v) { return g.parents(v); }
inline const VertexList& children(const MixedGraph& g, VertexId v) { return g.children(v); }

/// spa(v) = pa(pa(v)), sorted.
inline VertexList spa(const MixedGraph& g, VertexId v) {
  std::set<VertexId> s;
  for (VertexId p : g.parents(v)) s.insert(g.parents(p).begin(), g.parents(p).end());
  return {s.begin(), s.end()};
}

/// Vertices reachable from v by v -> ... or v <-> v1 -> ... (BFS over directed edges
/// seeded with the children of v and of its siblings). Sorted.
inline VertexList half_trek_reachable(const MixedGraph& g, VertexId v) {
  std::vector<bool> seen(g.size(), false);
  std::queue<VertexId> frontier;
  auto seed = [&](VertexId from) {
    for (VertexId c : g.children(from)) {
      if (!seen[c]) {
        seen[c] = true;
        frontier.push(c);
      }
    }
  };
  seed(v);
  for (VertexId s : g.siblings(v)) seed(s);
  while (!frontier.empty()) {
    VertexId u = frontier.front();
    frontier.pop();
    seed(u);
  }
  VertexList out;
  for (VertexId w = 0; w < g.size(); ++w) {
    if (seen[w]) out.push_back(w);
  }
  return out;
}

/// Witness path for w ∈ htr(v): vertices from v to w, with `bidirected_first` telling
/// whether the first step is v <-> path[1]. Empty when w is not half-trek reachable.
struct HalfTrekPath {
  VertexList path;
  bool bidirected_first = false;
};

inline HalfTrekPath half_trek_witness(const MixedGraph& g, VertexId v, VertexId w) {
  const std::size_t n = g.size();
  std::vector<VertexId> prev(n, n);
  std::vector<bool> seen(n, false);
  std::vector<bool> via_sibling(n, false);
  std::vector<bool> is_seed(n, false);
  std::queue<VertexId> q;
  auto push_children = [&](VertexId from, bool seed, bool sib) {
    for (VertexId c : g.children(from)) {
      if (seen[c]) continue;
      seen[c] = true;
      prev[c] = from;
      is_seed[c] = seed;
      via_sibling[c] = sib;
      q.push(c);
    }
  };
  push_children(v, true, false);
  for (VertexId s : g.siblings(v)) push_children(s, true, true);
  while (!q.empty()) {
    VertexId u = q.front();
    q.pop();
    push_children(u, false, via_sibling[u]);
  }
  HalfTrekPath out;
  if (!seen[w]) return out;
  VertexList rev{w};
  VertexId x = w;
  while (!is_seed[x]) {
    x = prev[x];
    rev.push_back(x);
  }
  rev.push_back(prev[x]);
  if (via_sibling[w]) {
    rev.push_back(v);
    out.bidirected_first = true;
  }
  out.path.assign(rev.rbegin(), rev.rend());
  return out;
}

/// k = max over vertices of max(in-degree, out-degree), directed edges only.
inline std::size_t max_degree_k(const MixedGraph& g) {
  std::size_t k = 0;
  for (VertexId v = 0; v < g.size(); ++v) {
    k = std::max({k, g.parents(v).size(), g.children(v).size()});
  }
  return k;
}

/// True iff every directed edge joins consecutive layers.
inline bool check_k_layered(const MixedGraph& g) {
  const auto ld = layer_decomposition(g);
  return std::all_of(g.directed_edges().begin(), g.directed_edges().end(), [&](const DirectedEdge& e) {
    return ld.layer_of[e.target] == ld.layer_of[e.source] + 1;
  });
}

/// Copy of g with a bidirected edge on every pair not joined by a directed edge, i.e. the
/// largest bidirected set that keeps g bow-free.
inline MixedGraph with_saturated_bidirected(const MixedGraph& g) {
  MixedGraph out(g.size(), g.sorted_directed_edges(), {});
  for (VertexId a = 0; a < g.size(); ++a) {
    for (VertexId b = a + 1; b < g.size(); ++b) {
      if (!g.adjacent_directed(a, b)) out.add_bidirected(a, b);
    }
  }
  return out;
}

}  // namespace lsem
