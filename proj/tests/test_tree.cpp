#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <trimforest/dataset.hpp>
#include <trimforest/tree.hpp>

#include "oracles.hpp"

namespace {

using namespace trimforest;

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

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed,
                       bool duplicate_values = false) {
  Rng rng(seed);
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.x.resize(n * d);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = rng.uniform01();
      if (duplicate_values) v = std::floor(v * 8.0) / 8.0;
      ds.x[i * d + j] = v;
    }
    ds.y[i] = rng.normal();
  }
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  return ds;
}

// ----------------------------------------------------------------------------
// best_split

TEST(BestSplit, FourPointExample) {
  Dataset ds = one_feature({1, 2, 3, 4}, {0, 0, 10, 10});
  auto r = best_split(ds, all_rows(ds), {0});
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->split.feature, 0);
  EXPECT_EQ(r->split.threshold, 2.5);
  EXPECT_EQ(r->child_sse, 0.0);
  EXPECT_EQ(r->left_rows.size(), 2u);
  EXPECT_EQ(r->right_rows.size(), 2u);
}

TEST(BestSplit, DegenerateInputs) {
  Dataset constant_x = one_feature({5, 5, 5, 5}, {0, 1, 2, 3});
  EXPECT_FALSE(best_split(constant_x, all_rows(constant_x), {0}).has_value());

  Dataset pure = one_feature({1, 2, 3, 4}, {5, 5, 5, 5});
  EXPECT_FALSE(best_split(pure, all_rows(pure), {0}).has_value());

  Dataset tiny = one_feature({1.0}, {2.0});
  EXPECT_FALSE(best_split(tiny, {0}, {0}).has_value());
}

TEST(BestSplit, TieBreaksLowestFeatureThenLowestThreshold) {
  // both features allow a perfect split at 2.5; the lower feature index wins
  Dataset ds;
  ds.n = 4;
  ds.d = 2;
  ds.x = {1, 4, 2, 3, 3, 2, 4, 1};
  ds.y = {0, 0, 10, 10};
  ds.feature_names = {"x1", "x2"};
  auto r = best_split(ds, all_rows(ds), {0, 1});
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->split.feature, 0);
  EXPECT_EQ(r->split.threshold, 2.5);

  // two boundaries with exactly equal error; the lower threshold wins
  Dataset tie = one_feature({1, 2, 3, 4}, {0, 12, 12, 24});
  auto t = best_split(tie, all_rows(tie), {0});
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->split.threshold, 1.5);
}

TEST(BestSplit, AdjacentDoublesRoundTowardUpperValue) {
  double a = 1.0;
  double b = std::nextafter(a, 2.0);
  Dataset ds = one_feature({a, b, b, b}, {0, 10, 10, 10});
  auto r = best_split(ds, all_rows(ds), {0});
  ASSERT_TRUE(r.has_value());
  // the midpoint rounds back onto a, so the boundary value itself is used
  EXPECT_EQ(r->split.threshold, b);
  EXPECT_EQ(r->left_rows.size(), 1u);
}

TEST(BestSplit, AgreesWithBruteForceOracle) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::size_t n = 5 + seed % 30;
    std::size_t d = 1 + seed % 3;
    Dataset ds = random_dataset(n, d, seed, seed % 2 == 0);
    std::vector<std::int32_t> feats;
    for (std::size_t j = 0; j < d; ++j) feats.push_back(static_cast<std::int32_t>(j));
    auto lib = best_split(ds, all_rows(ds), feats);
    auto orc = oracles::best_split(ds, all_rows(ds), feats);
    ASSERT_EQ(lib.has_value(), orc.has_value()) << "seed " << seed;
    if (!lib) continue;
    EXPECT_EQ(lib->split.feature, orc->feature) << "seed " << seed;
    EXPECT_EQ(lib->split.threshold, orc->threshold) << "seed " << seed;
    EXPECT_NEAR(lib->child_sse, orc->child_sse, 1e-9 * (1.0 + orc->child_sse))
        << "seed " << seed;
  }
}

// ----------------------------------------------------------------------------
// fit_tree

TEST(FitTree, BelowMinNodeSizeStaysRoot) {
  Dataset ds = one_feature({1, 2, 3, 4}, {0, 0, 10, 10});
  TreeConfig cfg;
  cfg.min_node_size = 5;
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  EXPECT_EQ(t.split_count(), 0u);
  EXPECT_EQ(predict_tree(t, ds.row(0)), 5.0);
}

TEST(FitTree, FourPointStump) {
  Dataset ds = one_feature({1, 2, 3, 4}, {0, 0, 10, 10});
  TreeConfig cfg;
  cfg.min_node_size = 2;
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_EQ(t.split_count(), 1u);
  EXPECT_EQ(t.nodes[0].threshold, 2.5);
  double x = 2.0;
  EXPECT_EQ(predict_tree(t, &x), 0.0);
  x = 3.0;
  EXPECT_EQ(predict_tree(t, &x), 10.0);
  x = 2.5;  // a point exactly at the threshold routes right
  EXPECT_EQ(predict_tree(t, &x), 10.0);
  check_tree(t);
}

TEST(FitTree, ConstantResponseNeverSplits) {
  Dataset ds = one_feature({1, 2, 3, 4, 5, 6}, {7, 7, 7, 7, 7, 7});
  TreeConfig cfg;
  cfg.min_node_size = 2;
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  EXPECT_EQ(t.split_count(), 0u);
}

TEST(FitTree, Validation) {
  Dataset ds = one_feature({1, 2}, {3, 4});
  TreeConfig cfg;
  EXPECT_THROW(fit_tree(ds, {}, cfg), Error);
  cfg.min_node_size = 1;
  EXPECT_THROW(fit_tree(ds, all_rows(ds), cfg), Error);
  cfg.min_node_size = 2;
  cfg.mtry = 3;
  EXPECT_THROW(fit_tree(ds, all_rows(ds), cfg), Error);
}

TEST(FitTree, ResolveMtry) {
  EXPECT_EQ(resolve_mtry(0, 1), 1);
  EXPECT_EQ(resolve_mtry(0, 5), 1);
  EXPECT_EQ(resolve_mtry(0, 6), 2);
  EXPECT_EQ(resolve_mtry(0, 9), 3);
  EXPECT_EQ(resolve_mtry(4, 5), 4);
  EXPECT_THROW(resolve_mtry(6, 5), Error);
  EXPECT_THROW(resolve_mtry(-1, 5), Error);
}

TEST(FitTree, RowOrderInvariance) {
  Dataset ds = random_dataset(40, 2, 5, true);
  TreeConfig cfg;
  cfg.min_node_size = 4;
  cfg.mtry = 2;
  cfg.seed = 3;
  std::vector<std::int32_t> rows = all_rows(ds);
  rows.push_back(7);
  rows.push_back(7);  // bootstrap-style duplicates
  Tree base = fit_tree(ds, rows, cfg);

  Rng rng(99);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::int32_t> shuffled = rows;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.below(i))]);
    Tree t = fit_tree(ds, shuffled, cfg);
    ASSERT_EQ(t.split_order, base.split_order);
    ASSERT_EQ(t.nodes.size(), base.nodes.size());
    for (std::size_t v = 0; v < t.nodes.size(); ++v) {
      EXPECT_EQ(t.nodes[v].feature, base.nodes[v].feature);
      EXPECT_EQ(t.nodes[v].threshold, base.nodes[v].threshold);
      EXPECT_EQ(t.nodes[v].stats.sse, base.nodes[v].stats.sse);
    }
  }
}

TEST(FitTree, StructuralInvariantsOnRandomTrees) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Dataset ds = random_dataset(30 + seed, 3, seed, seed % 3 == 0);
    TreeConfig cfg;
    cfg.min_node_size = 2 + static_cast<std::int64_t>(seed % 5);
    cfg.mtry = 1 + static_cast<std::int32_t>(seed % 3);
    cfg.seed = seed * 17;
    Tree t = fit_tree(ds, all_rows(ds), cfg);
    check_tree(t);

    std::int64_t leaf_total = 0;
    for (const Node& nd : t.nodes) {
      if (nd.is_leaf()) {
        leaf_total += nd.stats.count;
        continue;
      }
      const Node& l = t.nodes[static_cast<std::size_t>(nd.left)];
      const Node& r = t.nodes[static_cast<std::size_t>(nd.right)];
      EXPECT_GE(nd.stats.sse + 1e-9 * (1.0 + nd.stats.sse), l.stats.sse + r.stats.sse);
      EXPECT_GE(l.stats.count, 1);
      EXPECT_GE(r.stats.count, 1);
    }
    EXPECT_EQ(leaf_total, static_cast<std::int64_t>(ds.n));
  }
}

TEST(FitTree, SplitOrderIsDepthFirstLeftFirst) {
  Dataset ds = random_dataset(60, 2, 8);
  TreeConfig cfg;
  cfg.min_node_size = 5;
  cfg.mtry = 2;
  cfg.seed = 2;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_GE(t.split_count(), 3u);
  std::vector<std::size_t> pos(t.nodes.size());
  for (std::size_t i = 0; i < t.split_order.size(); ++i)
    pos[static_cast<std::size_t>(t.split_order[i])] = i;
  for (std::int32_t id : t.split_order) {
    const Node& nd = t.nodes[static_cast<std::size_t>(id)];
    if (!t.nodes[static_cast<std::size_t>(nd.left)].is_leaf())
      EXPECT_EQ(pos[static_cast<std::size_t>(nd.left)], pos[static_cast<std::size_t>(id)] + 1);
  }
}

TEST(FitTree, FullyResolvedTreeMemorizesTrainingPoints) {
  Dataset ds = random_dataset(16, 1, 21);
  TreeConfig cfg;
  cfg.min_node_size = 2;
  cfg.mtry = 1;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  EXPECT_EQ(t.split_count(), ds.n - 1);
  for (std::size_t i = 0; i < ds.n; ++i) EXPECT_EQ(predict_tree(t, ds.row(i)), ds.y[i]);
}

TEST(FitTree, DeterministicPerSeedAndSensitiveToIt) {
  Dataset ds = random_dataset(80, 3, 13);
  TreeConfig cfg;
  cfg.min_node_size = 3;
  cfg.mtry = 1;
  cfg.seed = 5;
  Tree a = fit_tree(ds, all_rows(ds), cfg);
  Tree b = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t v = 0; v < a.nodes.size(); ++v) {
    EXPECT_EQ(a.nodes[v].feature, b.nodes[v].feature);
    EXPECT_EQ(a.nodes[v].threshold, b.nodes[v].threshold);
  }

  bool differs = false;
  for (std::uint64_t s = 6; s < 16 && !differs; ++s) {
    cfg.seed = s;
    Tree c = fit_tree(ds, all_rows(ds), cfg);
    differs = c.nodes.size() != a.nodes.size() ||
              c.nodes[0].feature != a.nodes[0].feature ||
              c.nodes[0].threshold != a.nodes[0].threshold;
  }
  EXPECT_TRUE(differs);
}

TEST(CheckTree, RejectsCorruptedTrees) {
  Dataset ds = random_dataset(30, 2, 3);
  TreeConfig cfg;
  cfg.min_node_size = 5;
  cfg.mtry = 2;
  Tree t = fit_tree(ds, all_rows(ds), cfg);
  ASSERT_GE(t.split_count(), 2u);

  Tree broken = t;
  std::swap(broken.split_order.front(), broken.split_order.back());
  EXPECT_THROW(check_tree(broken), Error);

  Tree badparent = t;
  badparent.nodes[static_cast<std::size_t>(badparent.nodes[0].left)].parent = -1;
  EXPECT_THROW(check_tree(badparent), Error);

  Tree badcount = t;
  badcount.nodes[0].stats.count += 1;
  EXPECT_THROW(check_tree(badcount), Error);
}

}  // namespace
