#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "dsparse/error.hpp"
#include "dsparse/graph.hpp"

using namespace dsparse;
using Direction = AttentionGraph::Direction;

namespace {

// Diameter by repeated boolean matrix powering: reach_{n+1} = reach_n OR
// reach_n * A. Returns SIZE_MAX when some pair never becomes reachable.
std::size_t matrix_power_diameter(const SparseMaskSet& masks, bool undirected) {
  const std::size_t T = masks.tokens();
  std::vector<std::vector<char>> adj(T, std::vector<char>(T, 0));
  for (std::size_t h = 0; h < masks.head_count(); ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      for (TokenIndex j : masks.row(h, i)) {
        adj[i][j] = 1;
        if (undirected) adj[j][i] = 1;
      }
    }
  }
  std::vector<std::vector<char>> reach(T, std::vector<char>(T, 0));
  for (std::size_t i = 0; i < T; ++i) reach[i][i] = 1;
  for (std::size_t hops = 0; hops <= T; ++hops) {
    bool all = true;
    for (std::size_t i = 0; i < T && all; ++i) {
      for (std::size_t j = 0; j < T; ++j) all = all && reach[i][j];
    }
    if (all) return hops;
    auto next = reach;
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t k = 0; k < T; ++k) {
        if (!reach[i][k]) continue;
        for (std::size_t j = 0; j < T; ++j) next[i][j] |= adj[k][j];
      }
    }
    if (next == reach) return static_cast<std::size_t>(-1);
    reach = std::move(next);
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST(EquivalenceClasses, Examples) {
  const auto six = equivalence_classes(6, 3);
  ASSERT_EQ(six.size(), 3u);
  EXPECT_EQ(six[0].members, (std::vector<TokenIndex>{0, 3}));
  EXPECT_EQ(six[1].members, (std::vector<TokenIndex>{1, 4}));
  EXPECT_EQ(six[2].members, (std::vector<TokenIndex>{2, 5}));

  const auto big = equivalence_classes(672, 26);
  std::size_t total = 0;
  for (const auto& c : big) {
    EXPECT_EQ(c.members.size(), c.residue < 22 ? 26u : 25u) << c.residue;
    total += c.members.size();
  }
  EXPECT_EQ(total, 672u);

  const auto one = equivalence_classes(9, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].members.size(), 9u);

  // s > T leaves trailing classes empty.
  const auto sparse = equivalence_classes(3, 5);
  EXPECT_EQ(sparse[3].members.size(), 0u);
  EXPECT_EQ(sparse[4].members.size(), 0u);
}

TEST(VerifyPartition, DopplerMasksPass) {
  const auto canonical = verify_partition(build_doppler_masks({14, 48, 2, 2.0}));
  EXPECT_TRUE(canonical.ok);
  EXPECT_EQ(canonical.components, 26u);

  const auto dense = verify_partition(build_doppler_masks({4, 5, 1, 1.0}));
  EXPECT_TRUE(dense.ok);
  EXPECT_EQ(dense.components, 1u);
}

TEST(VerifyPartition, InjectedFaultGivesWitness) {
  const GridSpec grid{14, 48, 2, 2.0};
  const auto masks = build_doppler_masks(grid);
  std::vector<SparseMaskSet::Rows> heads(masks.head_count());
  for (std::size_t h = 0; h < masks.head_count(); ++h) {
    for (std::size_t i = 0; i < masks.tokens(); ++i) {
      const auto row = masks.row(h, i);
      heads[h].emplace_back(row.begin(), row.end());
    }
  }
  heads[0][0].insert(heads[0][0].begin() + 1, 1);  // {0, 1, 26, ...}
  const auto corrupted = SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 26, heads);
  const auto check = verify_partition(corrupted);
  EXPECT_FALSE(check.ok);
  ASSERT_TRUE(check.witness.has_value());
  EXPECT_EQ(*check.witness, (TokenPair{0, 1}));
  EXPECT_FALSE(check.witness_is_missing_edge);

  // Dropping an intra-class edge is caught as a missing edge.
  heads[0][0] = {0, 26};
  const auto truncated = SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 26, heads);
  const auto missing = verify_partition(truncated);
  EXPECT_FALSE(missing.ok);
  EXPECT_TRUE(missing.witness_is_missing_edge);
  EXPECT_EQ(*missing.witness, (TokenPair{0, 52}));

  EXPECT_THROW(verify_partition(build_fixed_strided_masks(grid)), Error);
}

TEST(EffectiveStep, Examples) {
  EXPECT_EQ(effective_step(2, 13, 48), 1u);
  EXPECT_EQ(effective_step(1, 1, 17), 1u);
  EXPECT_EQ(effective_step(2, 4, 6), 4u);
}

TEST(BridgingCondition, Examples) {
  EXPECT_TRUE(bridging_condition(1, 26));
  EXPECT_TRUE(bridging_condition(4, 5));
  EXPECT_FALSE(bridging_condition(4, 6));
}

TEST(HopDiameter, DenseIsOne) {
  const auto masks = build_doppler_masks({3, 4, 1, 1.0});
  for (auto dir : {Direction::directed, Direction::undirected}) {
    const auto d = hop_diameter(masks, dir);
    EXPECT_TRUE(d.reachable);
    EXPECT_EQ(d.diameter, 1u);
    EXPECT_TRUE(d.exact);
  }
}

TEST(HopDiameter, GlobalHeadAloneIsDisconnected) {
  const auto masks = build_doppler_masks({14, 48, 2, 2.0});
  const std::size_t head0[] = {0};
  const auto only_global = masks.select_heads(head0);
  const auto d = hop_diameter(only_global, Direction::undirected);
  EXPECT_FALSE(d.reachable);
  ASSERT_FALSE(d.unreachable_sample.empty());
  EXPECT_LE(d.unreachable_sample.size(), 10u);
  for (const auto& [a, b] : d.unreachable_sample) EXPECT_NE(a % 26, b % 26);
  EXPECT_EQ(d.diameter, 1u);  // within a class everything is one hop away

  const auto graph = AttentionGraph::from_masks(only_global, Direction::undirected);
  EXPECT_EQ(connected_components(graph), 26u);
}

TEST(HopDiameter, SmallBridgedGrid) {
  // s = 5, strides (1, 5), P = gcd(6, 5) = 1. Values from the BFS here agree
  // with the matrix-power oracle below and with an offline brute force.
  const auto masks = build_doppler_masks({4, 6, 2, 1.0});
  const auto directed = hop_diameter(masks, Direction::directed);
  const auto undirected = hop_diameter(masks, Direction::undirected);
  EXPECT_TRUE(directed.reachable);
  EXPECT_TRUE(undirected.reachable);
  EXPECT_EQ(directed.diameter, 3u);
  EXPECT_EQ(undirected.diameter, 2u);
}

TEST(HopDiameter, MatchesMatrixPowerOracle) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 8), heads(1, 4);
  const double lambdas[] = {1.0, 2.0, 4.0};
  for (int trial = 0; trial < 40; ++trial) {
    const GridSpec grid{dim(rng), dim(rng), heads(rng), lambdas[trial % 3]};
    const auto masks = build_doppler_masks(grid);
    for (bool undirected : {false, true}) {
      const auto d = hop_diameter(masks, undirected ? Direction::undirected : Direction::directed);
      const std::size_t oracle = matrix_power_diameter(masks, undirected);
      if (oracle == static_cast<std::size_t>(-1)) {
        EXPECT_FALSE(d.reachable) << grid.L << "x" << grid.K << " p=" << grid.heads;
      } else {
        EXPECT_TRUE(d.reachable);
        EXPECT_EQ(d.diameter, oracle) << grid.L << "x" << grid.K << " p=" << grid.heads;
      }
    }
  }
}

TEST(HopDiameter, CapAndSampling) {
  const auto masks = build_doppler_masks({14, 48, 2, 2.0});
  DiameterOptions opts;
  opts.max_all_pairs = 100;
  try {
    hop_diameter(masks, Direction::undirected, opts);
    FAIL() << "expected resource-limit";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::resource_limit);
  }
  opts.allow_sampling = true;
  opts.sampled_sources = 64;
  opts.seed = 5;
  const auto sampled = hop_diameter(masks, Direction::undirected, opts);
  EXPECT_FALSE(sampled.exact);
  EXPECT_EQ(sampled.sources_evaluated, 64u);
  EXPECT_TRUE(sampled.reachable);
  EXPECT_LE(sampled.diameter, 3u);
  const auto again = hop_diameter(masks, Direction::undirected, opts);
  EXPECT_EQ(again.diameter, sampled.diameter);
}

TEST(ConnectivityReport, CanonicalGrid) {
  const auto report = connectivity_report({14, 48, 2, 2.0});
  EXPECT_EQ(report.global_stride, 26u);
  ASSERT_EQ(report.heads.size(), 1u);
  EXPECT_EQ(report.heads[0].strides, (HeadStrides{2, 13}));
  EXPECT_EQ(report.heads[0].effective_step, 1u);
  EXPECT_TRUE(report.heads[0].bridging_ok);
  EXPECT_TRUE(report.fully_connected());
  std::size_t total = 0;
  for (std::size_t c : report.class_sizes) total += c;
  EXPECT_EQ(total, 672u);
  // Regression-locked measurements; the <= p hop bound does not hold here.
  EXPECT_EQ(report.directed.diameter, 3u);
  EXPECT_EQ(report.undirected.diameter, 3u);
  EXPECT_FALSE(report.hop_bound_satisfied);
}

TEST(ConnectivityReport, BridgingFailsButStillConnected) {
  const auto report = connectivity_report({4, 4, 2, 2.0});
  EXPECT_EQ(report.global_stride, 4u);
  ASSERT_EQ(report.heads.size(), 1u);
  EXPECT_EQ(report.heads[0].strides, (HeadStrides{2, 2}));
  EXPECT_EQ(report.heads[0].effective_step, 2u);
  EXPECT_FALSE(report.heads[0].bridging_ok);
  EXPECT_FALSE(report.any_bridging);
  EXPECT_TRUE(report.fully_connected());
  EXPECT_EQ(report.undirected.diameter, 2u);
  EXPECT_EQ(report.directed.diameter, 3u);
}

TEST(ConnectivityReport, SingleHead) {
  const auto report = connectivity_report({5, 5, 1, 1.0});
  EXPECT_TRUE(report.heads.empty());
  EXPECT_TRUE(report.fully_connected());
  EXPECT_EQ(report.undirected.diameter, 1u);
  EXPECT_TRUE(report.hop_bound_satisfied);
}

// Bridged 2D grids must come out as one component.
TEST(ConnectivityReport, BridgingImpliesConnectedBattery) {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<std::size_t> dim(2, 20), heads(2, 4);
  const double lambdas[] = {1.0, 2.0, 4.0};
  std::size_t bridged = 0;
  for (int trial = 0; trial < 80; ++trial) {
    const GridSpec grid{dim(rng), dim(rng), heads(rng), lambdas[trial % 3]};
    const auto report = connectivity_report(grid);
    if (!report.any_bridging) continue;
    ++bridged;
    EXPECT_EQ(report.undirected_components, 1u) << grid.L << "x" << grid.K << " p=" << grid.heads;
  }
  EXPECT_GT(bridged, 20u);
}

TEST(ConnectivityReport, JsonFields) {
  const auto json = report_to_json(connectivity_report({4, 4, 2, 2.0}));
  for (const char* key : {"\"classes\"", "\"P_h\"", "\"bridging_ok\"", "\"directed_diameter\"",
                          "\"undirected_diameter\"", "\"unreachable_sample\"", "\"hop_bound_satisfied\"", "\"s\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

// On a 1 x K strip the lattice offset of head 1 is i mod stride_k, so with
// stride_k == s every key stays in the query's own residue class even though
// gcd(P, s) == 1. The bridging condition is not sufficient without a second
// grid axis.
TEST(ConnectivityReport, DegenerateStripIsNotBridged) {
  const auto report = connectivity_report({1, 5, 2, 1.0});
  EXPECT_EQ(report.global_stride, 3u);
  ASSERT_EQ(report.heads.size(), 1u);
  EXPECT_EQ(report.heads[0].strides, (HeadStrides{1, 3}));
  EXPECT_TRUE(report.heads[0].bridging_ok);
  EXPECT_EQ(report.undirected_components, 3u);
  EXPECT_FALSE(report.undirected.reachable);
}
