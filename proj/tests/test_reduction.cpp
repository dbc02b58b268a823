#include <gtest/gtest.h>

#include <map>

#include "test_support.hpp"

namespace lsem {
namespace {

using test::graph1;
using test::max_abs;

// v1 -> v2 -> v3 -> v4 with the skip edge v1 -> v4, plus v1 <-> v3 and v2 <-> v4.
MixedGraph skip_graph() { return graph1(4, {{1, 2}, {2, 3}, {3, 4}, {1, 4}}, {{1, 3}, {2, 4}}); }

test::Instance instance_on(const MixedGraph& g, std::uint64_t seed) {
  ParamSet params{gen_lambda_range(g, {0.9, seed}), gen_omega_sdd(g, {1.0, seed})};
  const auto sigma = forward_map(g, params);
  return {g, params, sigma};
}

TEST(Gadget, VertexCounts) {
  IdAllocator ids(10);
  const auto g1 = build_gadget(0, 1, 1, 2, ids);
  ASSERT_EQ(g1.inner_layers.size(), 1u);
  EXPECT_EQ(g1.inner_layers[0].size(), 4u);
  EXPECT_EQ(g1.added_vertices(), 5u);
  const auto g2 = build_gadget(0, 1, 2, 2, ids);
  EXPECT_EQ(g2.added_vertices(), 7u);
  EXPECT_EQ(ids.next(), 10u + 5u + 7u);
  const auto g3 = build_gadget(0, 1, 3, 3, ids);
  EXPECT_EQ(g3.added_vertices(), 2u * 3u + 9u + 1u);
}

TEST(Gadget, DirectVariantHasUnitEdge) {
  IdAllocator ids(2);
  const auto g = build_gadget(0, 1, 0, 3, ids);
  EXPECT_EQ(g.added_vertices(), 1u);
  const auto edges = g.edges();
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_EQ(edges[0].forced_weight, std::optional<double>(1.0));
  EXPECT_FALSE(edges[1].forced_weight.has_value());
}

TEST(Gadget, AllocatorExhaustionIsCapacityError) {
  IdAllocator ids(0, 3);
  EXPECT_THROW(build_gadget(0, 1, 1, 2, ids), CapacityError);
}

TEST(Gadget, CollectorEqualsHeadSymbolically) {
  for (std::size_t q = 1; q <= 4; ++q) {
    for (std::size_t r = 1; r <= 4; ++r) {
      IdAllocator ids(2);
      const auto gd = build_gadget(0, 1, q, r, ids);
      // Every forced weight is exactly 1/r, every path has q + 1 forced edges, and the number of
      // head-to-collector paths is r^(q+1), so the coefficient is r^(q+1) * r^-(q+1) = 1.
      std::map<VertexId, std::uint64_t> paths{{gd.head, 1}};
      std::map<VertexId, int> depth{{gd.head, 0}};
      for (const auto& e : gd.edges()) {
        if (!e.forced_weight) {
          EXPECT_EQ(e.source, gd.collector);
          EXPECT_EQ(e.target, gd.tail);
          continue;
        }
        ASSERT_EQ(*e.forced_weight, 1.0 / static_cast<double>(r));
        paths[e.target] += paths.at(e.source);
        const int d = depth.at(e.source) + 1;
        auto [it, fresh] = depth.emplace(e.target, d);
        ASSERT_EQ(it->second, d) << "gadget edge skips a stage";
      }
      std::uint64_t expect = 1;
      for (std::size_t i = 0; i <= q; ++i) expect *= r;
      EXPECT_EQ(paths.at(gd.collector), expect);
      EXPECT_EQ(depth.at(gd.collector), static_cast<int>(q + 1));

      // Numerically: propagate X_head = 1 through the noiseless stages.
      std::map<VertexId, double> x{{gd.head, 1.0}};
      for (const auto& e : gd.edges()) {
        if (e.forced_weight) x[e.target] += *e.forced_weight * x.at(e.source);
      }
      EXPECT_NEAR(x.at(gd.collector), 1.0, 1e-14);
      for (const auto& layer : gd.inner_layers) {
        for (VertexId v : layer) EXPECT_NEAR(x.at(v), 1.0 / static_cast<double>(r), 1e-15);
      }
    }
  }
}

TEST(Reduction, LayeredInputIsIdentity) {
  const auto g = graph1(4, {{1, 2}, {2, 3}, {3, 4}}, {{1, 3}});
  const auto inst = instance_on(g, 2);
  const auto red = reduce(g, inst.sigma);
  EXPECT_TRUE(red.gadgets.empty());
  EXPECT_EQ(red.g_prime, g);
  ASSERT_TRUE(red.sigma_prime.has_value());
  EXPECT_EQ(max_abs(red.sigma_prime->sigma - inst.sigma.sigma), 0.0);
  for (VertexId v = 0; v < 4; ++v) EXPECT_EQ(red.old_to_new[v], v);
  const auto ver = verify_reduction(g, inst.sigma, red);
  EXPECT_TRUE(ver.pass());
  EXPECT_TRUE(ver.failures.empty());
}

TEST(Reduction, SkipEdgeBecomesGadgetPath) {
  const auto g = skip_graph();
  const auto red = reduce_graph(g);
  ASSERT_EQ(red.gadgets.size(), 1u);
  const auto& gd = red.gadgets[0];
  EXPECT_EQ(red.r, 2u);
  EXPECT_EQ(gd.head, 0u);
  EXPECT_EQ(gd.tail, 3u);
  EXPECT_EQ(gd.q, 1u);
  EXPECT_EQ(red.g_prime.size(), 4u + 4u + 1u);
  EXPECT_FALSE(red.g_prime.has_directed(0, 3));
  EXPECT_TRUE(red.g_prime.has_directed(gd.collector, 3));
  EXPECT_TRUE(red.g_prime.has_bidirected(gd.collector, 2));  // sibling of the head
  EXPECT_TRUE(red.g_prime.has_bidirected(gd.collector, 1));  // sibling of the tail
  for (VertexId x : gd.inner_layers[0]) {
    EXPECT_TRUE(red.g_prime.has_directed(0, x));
    EXPECT_TRUE(red.g_prime.has_directed(x, gd.collector));
    EXPECT_TRUE(red.g_prime.siblings(x).empty());
  }
  EXPECT_TRUE(validate_bow_free(red.g_prime).pass);
  EXPECT_TRUE(check_k_layered(red.g_prime));
  EXPECT_EQ(red.k_layers, 4u);
}

TEST(Reduction, NonBowFreeInputRejected) {
  EXPECT_THROW(reduce_graph(graph1(2, {{1, 2}}, {{1, 2}})), PatternError);
}

TEST(Reduction, CovarianceFromEquivalentSystem) {
  const auto g = skip_graph();
  const auto inst = instance_on(g, 3);
  const auto red = reduce(g, inst.sigma);
  const Matrix& s = inst.sigma.sigma;
  const Matrix& sp = red.sigma_prime->sigma;
  const auto& gd = red.gadgets[0];
  EXPECT_EQ(max_abs(sp.topLeftCorner(4, 4) - s), 0.0);
  for (VertexId x : gd.inner_layers[0]) {
    EXPECT_DOUBLE_EQ(sp(0, x), s(0, 0) / 2.0);
    EXPECT_DOUBLE_EQ(sp(2, x), s(2, 0) / 2.0);
    for (VertexId y : gd.inner_layers[0]) EXPECT_DOUBLE_EQ(sp(x, y), s(0, 0) / 4.0);
  }
  EXPECT_DOUBLE_EQ(sp(0, gd.collector), s(0, 0));
  EXPECT_DOUBLE_EQ(sp(gd.collector, gd.collector), s(0, 0));
  EXPECT_DOUBLE_EQ(sp(3, gd.collector), s(3, 0));
  ASSERT_EQ(red.cross_check.collectors, VertexList{gd.collector});
  EXPECT_GT(red.cross_check.differing_entries, 0u);
  EXPECT_GT(red.cross_check.max_abs_difference, 0.0);
}

TEST(Reduction, CovarianceMatchesDeterministicGadgetModel) {
  // Oracle: Σ' = T Σ Tᵀ with T mapping each vertex of G' to its linear function of X.
  const auto inst = test::sdd_instance(9, 0.5, 21);
  const auto red = reduce(inst.g, inst.sigma);
  const auto np = static_cast<Index>(red.g_prime.size());
  Matrix t = Matrix::Zero(np, 9);
  for (Index v = 0; v < 9; ++v) t(v, v) = 1.0;
  for (const auto& gd : red.gadgets) {
    for (const auto& layer : gd.inner_layers) {
      for (VertexId x : layer) t(static_cast<Index>(x), static_cast<Index>(gd.head)) = 1.0 / static_cast<double>(gd.r);
    }
    t(static_cast<Index>(gd.collector), static_cast<Index>(gd.head)) = 1.0;
  }
  const Matrix oracle = t * inst.sigma.sigma * t.transpose();
  EXPECT_LE(max_abs(red.sigma_prime->sigma - oracle), 1e-12 * max_abs(oracle));
}

TEST(Reduction, CollectorEdgeRecoversSkipWeight) {
  const auto g = skip_graph();
  const auto inst = instance_on(g, 4);
  const auto red = reduce(g, inst.sigma);
  const auto res = recover_all(red.g_prime, *red.sigma_prime);
  EXPECT_NEAR(res.lambda_hat(red.gadgets[0].collector, 3), inst.params.lambda(0, 3), 1e-8);
  const auto ver = verify_reduction(g, inst.sigma, red);
  EXPECT_TRUE(ver.pass()) << (ver.failures.empty() ? "" : ver.failures[0]);
}

TEST(Reduction, CorruptedCovarianceFailsSystemCheck) {
  const auto g = skip_graph();
  const auto inst = instance_on(g, 5);
  auto red = reduce(g, inst.sigma);
  red.sigma_prime->sigma(0, 1) = red.sigma_prime->sigma(1, 0) = 0.0;
  const auto ver = verify_reduction(g, inst.sigma, red);
  EXPECT_FALSE(ver.systems_match);
  EXPECT_FALSE(ver.pass());
  bool located = false;
  for (const auto& f : ver.failures) located = located || f.rfind("(e) vertex 2", 0) == 0;
  EXPECT_TRUE(located);
}

TEST(ReductionProperty, RecoveryPreservedOnRandomInstances) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t n = 4 + s % 12;
    const auto inst = test::sdd_instance(n, 0.45, 1000 + s);
    const auto red = reduce(inst.g, inst.sigma);
    const auto ver = verify_reduction(inst.g, inst.sigma, red);
    ASSERT_TRUE(ver.pass()) << "seed " << s << ": " << (ver.failures.empty() ? "" : ver.failures[0]);
    const double nn = static_cast<double>(n);
    ASSERT_LE(static_cast<double>(red.g_prime.size()), std::pow(nn, 6.0));
    ASSERT_LE(static_cast<double>(red.k_layers), nn * nn);

    const auto base = recover_all(inst.g, inst.sigma);
    const auto reduced = recover_all(red.g_prime, *red.sigma_prime);
    for (const auto& e : inst.g.directed_edges()) {
      VertexId src = e.source;
      for (const auto& gd : red.gadgets) {
        if (gd.head == e.source && gd.tail == e.target) src = gd.collector;
      }
      ASSERT_NEAR(reduced.lambda_hat(src, e.target), base.lambda_hat(e.source, e.target), 1e-8) << "seed " << s;
    }
  }
}

TEST(ReductionProperty, SystemConditionNumbersIdentical) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto inst = test::sdd_instance(8, 0.5, 2000 + s);
    const auto red = reduce(inst.g, inst.sigma);
    const auto base = recover_all(inst.g, inst.sigma);
    const Matrix embedded = [&] {
      Matrix out = Matrix::Zero(static_cast<Index>(red.g_prime.size()), static_cast<Index>(red.g_prime.size()));
      for (const auto& e : red.g_prime.directed_edges()) {
        if (e.forced_weight) out(e.source, e.target) = *e.forced_weight;
      }
      for (const auto& e : inst.g.directed_edges()) {
        VertexId src = e.source;
        for (const auto& gd : red.gadgets) {
          if (gd.head == e.source && gd.tail == e.target) src = gd.collector;
        }
        out(src, e.target) = base.lambda_hat(e.source, e.target);
      }
      return out;
    }();
    for (VertexId v = 0; v < inst.g.size(); ++v) {
      if (inst.g.parents(v).empty()) continue;
      const auto a = build_system(inst.g, inst.sigma, PartialLambda::complete(base.lambda_hat), v).a;
      const auto ap = build_system(red.g_prime, *red.sigma_prime, PartialLambda::complete(embedded), v).a;
      const double ka = norm2(a) / min_singular_value(a);
      const double kp = norm2(ap) / min_singular_value(ap);
      ASSERT_NEAR(ka, kp, 1e-8 * ka) << "seed " << s << " vertex " << v + 1;
    }
  }
}

TEST(ReductionProperty, IdempotentOnReducedGraph) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto inst = test::sdd_instance(10, 0.4, 3000 + s);
    const auto once = reduce_graph(inst.g);
    const auto twice = reduce_graph(once.g_prime);
    ASSERT_TRUE(twice.gadgets.empty());
    ASSERT_EQ(twice.g_prime, once.g_prime);
  }
}

}  // namespace
}  // namespace lsem
