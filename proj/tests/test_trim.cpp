#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <trimforest/dataset.hpp>
#include <trimforest/tree.hpp>
#include <trimforest/trim.hpp>

#include "oracles.hpp"

namespace {

using namespace trimforest;

NodeStats stats_of(std::int64_t count, double sum, double sse) {
  NodeStats s;
  s.count = count;
  s.sum = sum;
  s.mean = sum / double(count);
  s.sse = sse;
  s.sum2 = sse + sum * sum / double(count);
  return s;
}

Dataset one_feature(std::vector<double> x, std::vector<double> y) {
  Dataset ds;
  ds.n = x.size();
  ds.d = 1;
  ds.x = std::move(x);
  ds.y = std::move(y);
  ds.feature_names = {"x1"};
  return ds;
}

std::vector<std::int32_t> all_rows(const Dataset& ds) {
  std::vector<std::int32_t> rows(ds.n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.x.resize(n * d);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.x[i * d + j] = rng.uniform01();
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += ds.x[i * d + j];
    ds.y[i] = s + 0.3 * rng.normal();
  }
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  return ds;
}

// A hand-built stump with chosen statistics, for exercising the decision
// boundary without a dataset.
Tree manual_stump(const NodeStats& parent, const NodeStats& left, const NodeStats& right) {
  Tree t;
  Node root;
  root.stats = parent;
  root.feature = 0;
  root.threshold = 0.5;
  root.left = 1;
  root.right = 2;
  Node l;
  l.stats = left;
  l.parent = 0;
  Node r;
  r.stats = right;
  r.parent = 0;
  t.nodes = {root, l, r};
  t.split_order = {0};
  return t;
}

// ----------------------------------------------------------------------------
// information values

TEST(Information, ParentFormula) {
  EXPECT_NEAR(parent_information(stats_of(4, 22, 101.0)), 24.266812888522857, 1e-12);
  // count=2 with variance exactly 1/(2pi): the log term vanishes
  EXPECT_NEAR(parent_information(stats_of(2, 0, 2.0 / kTwoPi)), 2.0, 1e-12);
}

TEST(Information, ParentVarianceFloorError) {
  EXPECT_THROW(parent_information(stats_of(4, 0, 0.0)), VarianceFloorError);
}

TEST(Information, Case1Formula) {
  NodeStats parent = stats_of(4, 22, 101.0);
  NodeStats left = stats_of(2, 1, 0.5);
  NodeStats right = stats_of(2, 21, 0.5);
  auto [il, ir] = child_information_case1(parent, left, right);
  EXPECT_NEAR(il, 2.9031654105789095, 1e-12);
  EXPECT_EQ(il, ir);  // symmetric children give identical values
}

TEST(Information, Case1FloorFallsBackToHalfTerminalVariance) {
  NodeStats parent = stats_of(4, 0, 8.0);  // fallback variance = 8/4/2 = 1
  NodeStats left = stats_of(2, 0, 0.0);
  NodeStats right = stats_of(2, 0, 0.0);
  auto [il, ir] = child_information_case1(parent, left, right);
  EXPECT_NEAR(il, 2.0 * std::log(kTwoPi), 1e-12);
  EXPECT_EQ(il, ir);
}

TEST(Information, Case2Formula) {
  NodeStats parent = stats_of(10, 0, 5.0);
  NodeStats undefined_child = stats_of(4, 0, 2.0);
  double v = child_information_case2(parent, undefined_child, 3.0);
  // pooled variance (2 + 3) / 10 = 0.5
  EXPECT_NEAR(v, 4.0 * std::log(kTwoPi * 0.5) + 2.0 / 0.5, 1e-12);
}

TEST(Information, Case2DegeneratesToCase1) {
  NodeStats parent = stats_of(6, 3, 7.0);
  NodeStats left = stats_of(2, 1, 2.0);
  NodeStats right = stats_of(4, 2, 3.0);
  auto [il, ir] = child_information_case1(parent, left, right);
  EXPECT_EQ(child_information_case2(parent, left, right.sse), il);
  EXPECT_EQ(child_information_case2(parent, right, left.sse), ir);
}

TEST(Information, Case2ZeroSseChildIsFinite) {
  NodeStats parent = stats_of(8, 0, 4.0);
  NodeStats child = stats_of(3, 0, 0.0);
  double v = child_information_case2(parent, child, 2.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 3.0 * std::log(kTwoPi * 0.25), 1e-12);
}

// ----------------------------------------------------------------------------
// prune

TEST(Prune, FourPointStumpBoundary) {
  Dataset ds = one_feature({1, 2, 3, 4}, {0, 1, 10, 11});
  TreeConfig cfg;
  cfg.min_node_size = 3;  // children of size 2 stay leaves
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_EQ(t.split_count(), 1u);

  const double boundary = 4.438807655167864;  // (I_N - I_L - I_R) / (P1 - P0)
  EXPECT_EQ(leaf_count(prune(t, 1.0)), 2u);
  EXPECT_EQ(leaf_count(prune(t, boundary - 1e-6)), 2u);
  EXPECT_EQ(leaf_count(prune(t, boundary + 1e-6)), 1u);
}

TEST(Prune, ManualStumpBoundaryIsTwoThirds) {
  // parent: n=4, sse=4; children: n=2, sse=1 each. Merge iff alpha >= 2/3.
  Tree t = manual_stump(stats_of(4, 0, 4.0), stats_of(2, 0, 1.0), stats_of(2, 0, 1.0));
  EXPECT_EQ(leaf_count(prune(t, 2.0 / 3.0 - 1e-9)), 2u);
  EXPECT_EQ(leaf_count(prune(t, 2.0 / 3.0 + 1e-9)), 1u);
}

TEST(Prune, AlphaZeroIsIdentity) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Dataset ds = random_dataset(50, 2, seed);
    TreeConfig cfg;
    cfg.min_node_size = 4;
    cfg.mtry = 2;
    cfg.seed = seed;
    Tree t = fit_tree(ds, all_rows(ds), cfg);
    TrimmedTree tt = prune(t, 0.0);
    for (std::uint8_t m : tt.merged) EXPECT_EQ(m, 0);
    Rng rng(seed + 100);
    for (int i = 0; i < 20; ++i) {
      double x[2] = {rng.uniform01(), rng.uniform01()};
      EXPECT_EQ(predict_trimmed(tt, x), predict_tree(t, x));
    }
  }
}

TEST(Prune, HugeAlphaCollapsesEverything) {
  Dataset ds = random_dataset(60, 2, 3);
  TreeConfig cfg;
  cfg.min_node_size = 4;
  cfg.mtry = 2;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_GE(t.split_count(), 2u);
  TrimmedTree tt = prune(t, 1e9);
  EXPECT_EQ(leaf_count(tt), 1u);
  double x[2] = {0.5, 0.5};
  EXPECT_EQ(predict_trimmed(tt, x), t.nodes[0].stats.mean);
}

TEST(Prune, RootOnlyTreeUntouched) {
  Dataset ds = one_feature({1, 2, 3}, {5, 5, 5});
  TreeConfig cfg;
  cfg.min_node_size = 2;
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_EQ(t.split_count(), 0u);
  for (double a : {0.0, 5.0}) {
    TrimmedTree tt = prune(t, a);
    EXPECT_EQ(leaf_count(tt), 1u);
    double x = 2.0;
    EXPECT_EQ(predict_trimmed(tt, &x), 5.0);
  }
}

TEST(Prune, RejectsNegativeAlpha) {
  Tree t = manual_stump(stats_of(4, 0, 4.0), stats_of(2, 0, 1.0), stats_of(2, 0, 1.0));
  EXPECT_THROW(prune(t, -0.1), Error);
  EXPECT_THROW(prune(t, std::nan("")), Error);
}

TEST(Prune, OneDecisionPerInternalNode) {
  Dataset ds = random_dataset(80, 3, 9);
  TreeConfig cfg;
  cfg.min_node_size = 5;
  cfg.mtry = 2;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  PruneCounters counters;
  prune(t, 0.7, Penalty{}, &counters);
  EXPECT_EQ(counters.decisions, t.split_count());
}

TEST(Prune, VarianceFloorErrorNamesTheNode) {
  Tree t = manual_stump(stats_of(4, 0, 0.0), stats_of(2, 0, 0.0), stats_of(2, 0, 0.0));
  try {
    prune(t, 1.0);
    FAIL() << "expected a variance floor error";
  } catch (const VarianceFloorError& e) {
    EXPECT_NE(std::string(e.what()).find("node 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("min node size"), std::string::npos);
  }
}

TEST(Prune, MergedSetIsClosedDownward) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Dataset ds = random_dataset(70, 2, seed * 3);
    TreeConfig cfg;
    cfg.min_node_size = 4;
    cfg.mtry = 2;
    cfg.seed = seed;
    Tree t = fit_tree(ds, all_rows(ds), cfg);
    TrimmedTree tt = prune(t, 1.2);
    for (std::size_t v = 0; v < t.nodes.size(); ++v) {
      const Node& nd = t.nodes[v];
      if (nd.is_leaf()) {
        EXPECT_EQ(tt.merged[v], 0);
        continue;
      }
      if (tt.merged[v]) {
        if (!t.nodes[static_cast<std::size_t>(nd.left)].is_leaf())
          EXPECT_TRUE(tt.merged[static_cast<std::size_t>(nd.left)]);
        if (!t.nodes[static_cast<std::size_t>(nd.right)].is_leaf())
          EXPECT_TRUE(tt.merged[static_cast<std::size_t>(nd.right)]);
      }
    }
  }
}

TEST(Prune, LeafCountShrinksAlongTheGrid) {
  Dataset ds = random_dataset(100, 2, 14);
  TreeConfig cfg;
  cfg.min_node_size = 3;
  cfg.mtry = 2;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  std::size_t full = leaf_count(prune(t, 0.0));
  std::size_t mid = leaf_count(prune(t, 1.5));
  std::size_t high = leaf_count(prune(t, 3.0));
  EXPECT_EQ(full, t.split_count() + 1);
  EXPECT_LE(mid, full);
  EXPECT_LE(high, mid);
  EXPECT_GE(high, 1u);
}

TEST(Prune, MatchesFromRawDataOracle) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 30 && seed < 400; ++seed) {
    Rng rng(seed * 1009);
    std::size_t n = 8 + rng.below(25);
    Dataset ds = random_dataset(n, 1 + rng.below(3), seed);
    TreeConfig cfg;
    cfg.min_node_size = 2 + static_cast<std::int64_t>(rng.below(7));
    cfg.mtry = 1;
    cfg.seed = seed;

    std::vector<std::int32_t> rows = all_rows(ds);
    if (seed % 3 == 0) {
      rows[0] = rows[1];  // bootstrap-style duplicate
      std::sort(rows.begin(), rows.end());
    }
    Tree t = fit_tree(ds, rows, cfg);
    if (t.split_count() < 1 || t.split_count() > 6) continue;
    ++checked;

    for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
      TrimmedTree lib = prune(t, alpha);
      oracles::OraclePrune orc = oracles::prune(t, ds, rows, alpha);
      EXPECT_EQ(lib.merged, orc.merged) << "seed " << seed << " alpha " << alpha;
    }
  }
  EXPECT_EQ(checked, 30);
}

TEST(Prune, TrimmedPredictionMatchesPhysicalCollapse) {
  for (std::uint64_t seed = 2; seed <= 12; ++seed) {
    Dataset ds = random_dataset(60, 2, seed * 7);
    TreeConfig cfg;
    cfg.min_node_size = 4;
    cfg.mtry = 2;
    cfg.seed = seed;
    Tree t = fit_tree(ds, all_rows(ds), cfg);
    for (double alpha : {0.3, 1.0, 2.5}) {
      TrimmedTree tt = prune(t, alpha);
      Tree collapsed = oracles::collapse(t, tt.merged);
      check_tree(collapsed);
      EXPECT_EQ(leaf_count(tt), (collapsed.nodes.size() + 1) / 2);
      Rng rng(seed);
      for (int i = 0; i < 25; ++i) {
        double x[2] = {rng.uniform01(), rng.uniform01()};
        EXPECT_EQ(predict_trimmed(tt, x), predict_tree(collapsed, x));
      }
    }
  }
}

TEST(Penalty, NodeLocalSampleSize) {
  Penalty pen;
  EXPECT_EQ(pen.p0(100), 2.0 * std::log(100.0));
  EXPECT_EQ(pen.p1(100), 5.0 * std::log(100.0));
  EXPECT_GT(pen.p1(2), pen.p0(2));
  EXPECT_GT(pen.p0(2), 0.0);
}

}  // namespace
