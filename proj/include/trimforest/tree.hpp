#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "trimforest/dataset.hpp"

namespace trimforest {

// ============================================================================
// node statistics
// ============================================================================

struct NodeStats {
  std::int64_t count = 0;
  double sum = 0.0;   // sum of responses in the node
  double sum2 = 0.0;  // sum of squared responses
  double sse = 0.0;   // squared error around the node mean, clamped at 0
  double mean = 0.0;
};

inline NodeStats make_stats(const Dataset& ds, const std::vector<std::int32_t>& rows) {
  NodeStats s;
  s.count = static_cast<std::int64_t>(rows.size());
  for (std::int32_t r : rows) {
    double v = ds.y[static_cast<std::size_t>(r)];
    s.sum += v;
    s.sum2 += v * v;
  }
  s.mean = s.sum / double(s.count);
  s.sse = s.sum2 - s.sum * s.sum / double(s.count);
  if (s.sse < 0) s.sse = 0;
  return s;
}

// ============================================================================
// tree
// ============================================================================

struct SplitPoint {
  std::int32_t feature = -1;
  double threshold = 0.0;
};

struct Node {
  NodeStats stats;
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t parent = -1;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<std::int32_t> split_order;  // internal nodes in commit order
  std::int32_t root = 0;

  std::size_t split_count() const { return split_order.size(); }
};

struct TreeConfig {
  std::int64_t min_node_size = 3;  // nodes below this size are never split
  std::int32_t mtry = 0;           // features tried per split; 0 means max(1, d/3)
  std::uint64_t seed = 0;
};

inline std::int32_t resolve_mtry(std::int32_t mtry, std::size_t d) {
  if (mtry == 0) return std::max<std::int32_t>(1, static_cast<std::int32_t>(d / 3));
  if (mtry < 1 || static_cast<std::size_t>(mtry) > d)
    throw Error("mtry must lie in [1, d]");
  return mtry;
}

// ============================================================================
// split search
// ============================================================================

struct SplitResult {
  SplitPoint split;
  double child_sse = 0.0;  // left + right squared error after the split
  std::vector<std::int32_t> left_rows;
  std::vector<std::int32_t> right_rows;
};

// Minimizes the summed child squared error over midpoint thresholds between
// consecutive distinct values of the candidate features. Ties go to the
// lowest feature index, then the lowest threshold. Returns nothing when the
// node is pure or every candidate feature is constant on it. Rows with a
// feature value below the threshold route left; equal or above route right.
inline std::optional<SplitResult> best_split(const Dataset& ds,
                                             const std::vector<std::int32_t>& rows,
                                             const std::vector<std::int32_t>& features) {
  const std::size_t m = rows.size();
  if (m < 2) return std::nullopt;

  double tot1 = 0.0, tot2 = 0.0;
  for (std::int32_t r : rows) {
    double v = ds.y[static_cast<std::size_t>(r)];
    tot1 += v;
    tot2 += v * v;
  }
  double total_sse = tot2 - tot1 * tot1 / double(m);
  if (!(total_sse > 0)) return std::nullopt;  // pure node

  // Sorting by (value, row) makes the scan order, and with it every floating
  // point accumulation, independent of the incoming row order.
  std::vector<std::pair<double, std::int32_t>> vals(m);
  bool found = false;
  std::int32_t best_feature = -1;
  double best_threshold = 0.0;
  double best_sse = 0.0;

  for (std::int32_t f : features) {
    for (std::size_t i = 0; i < m; ++i)
      vals[i] = {ds.at(static_cast<std::size_t>(rows[i]), static_cast<std::size_t>(f)), rows[i]};
    std::sort(vals.begin(), vals.end());
    if (vals.front().first == vals.back().first) continue;  // constant feature

    double run1 = 0.0, run2 = 0.0;
    for (std::size_t i = 1; i < m; ++i) {
      double v = ds.y[static_cast<std::size_t>(vals[i - 1].second)];
      run1 += v;
      run2 += v * v;
      if (vals[i - 1].first == vals[i].first) continue;
      double nl = double(i), nr = double(m - i);
      double sl = run2 - run1 * run1 / nl;
      if (sl < 0) sl = 0;
      double rest1 = tot1 - run1, rest2 = tot2 - run2;
      double sr = rest2 - rest1 * rest1 / nr;
      if (sr < 0) sr = 0;
      double t = sl + sr;
      if (!found || t < best_sse) {
        double a = vals[i - 1].first, b = vals[i].first;
        double mid = a + (b - a) / 2;
        if (!(mid > a)) mid = b;  // rounding guard; keeps routing at the scanned boundary
        best_sse = t;
        best_feature = f;
        best_threshold = mid;
        found = true;
      }
    }
  }
  if (!found) return std::nullopt;

  SplitResult res;
  res.split = {best_feature, best_threshold};
  res.child_sse = best_sse;
  for (std::int32_t r : rows) {
    if (ds.at(static_cast<std::size_t>(r), static_cast<std::size_t>(best_feature)) < best_threshold)
      res.left_rows.push_back(r);
    else
      res.right_rows.push_back(r);
  }
  return res;
}

// ============================================================================
// growing
// ============================================================================

// Grows a CART regression tree on the given row multiset (duplicates count
// with multiplicity). Only nodes holding at least min_node_size rows are
// considered for a split; children may be any size down to one row. Each
// split draws mtry candidate features fresh, without replacement. Splits are
// committed depth first, left child first, and split_order records that
// commit order. The result does not depend on the order of the incoming
// row multiset.
inline Tree fit_tree(const Dataset& ds, std::vector<std::int32_t> rows, const TreeConfig& cfg) {
  if (rows.empty()) throw Error("fit_tree needs at least one row");
  if (cfg.min_node_size < 2) throw Error("min_node_size must be at least 2");
  for (std::int32_t r : rows)
    if (r < 0 || static_cast<std::size_t>(r) >= ds.n)
      throw Error("fit_tree row index out of range");
  const std::int32_t mtry = resolve_mtry(cfg.mtry, ds.d);
  std::sort(rows.begin(), rows.end());

  Rng rng(cfg.seed);
  std::vector<std::int32_t> pool(ds.d);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::int32_t> feats(static_cast<std::size_t>(mtry));

  Tree tree;
  tree.nodes.push_back(Node{make_stats(ds, rows), -1, 0.0, -1, -1, -1});

  struct Pending {
    std::int32_t id;
    std::vector<std::int32_t> rows;
  };
  std::vector<Pending> stack;
  stack.push_back({0, std::move(rows)});

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    for (;;) {
      if (static_cast<std::int64_t>(cur.rows.size()) < cfg.min_node_size) break;
      for (std::int32_t i = 0; i < mtry; ++i) {
        std::size_t j = static_cast<std::size_t>(i) + rng.below(ds.d - static_cast<std::size_t>(i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        feats[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
      }
      std::sort(feats.begin(), feats.end());
      auto bs = best_split(ds, cur.rows, feats);
      if (!bs) break;

      auto left_id = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(Node{make_stats(ds, bs->left_rows), -1, 0.0, -1, -1, cur.id});
      auto right_id = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(Node{make_stats(ds, bs->right_rows), -1, 0.0, -1, -1, cur.id});

      Node& nd = tree.nodes[static_cast<std::size_t>(cur.id)];
      nd.feature = bs->split.feature;
      nd.threshold = bs->split.threshold;
      nd.left = left_id;
      nd.right = right_id;
      tree.split_order.push_back(cur.id);

      stack.push_back({right_id, std::move(bs->right_rows)});
      cur = {left_id, std::move(bs->left_rows)};
    }
  }
  return tree;
}

inline double predict_tree(const Tree& tree, const double* x) {
  std::int32_t v = tree.root;
  for (;;) {
    const Node& nd = tree.nodes[static_cast<std::size_t>(v)];
    if (nd.is_leaf()) return nd.stats.mean;
    v = x[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
}

// Structural validation used by tests and the model loader.
inline void check_tree(const Tree& tree) {
  if (tree.nodes.empty()) throw Error("tree has no nodes");
  if (tree.root != 0) throw Error("tree root must be node 0");
  const auto size = static_cast<std::int32_t>(tree.nodes.size());
  std::vector<std::int32_t> position(tree.nodes.size(), -1);
  for (std::size_t k = 0; k < tree.split_order.size(); ++k) {
    std::int32_t id = tree.split_order[k];
    if (id < 0 || id >= size) throw Error("split_order index out of range");
    if (position[static_cast<std::size_t>(id)] >= 0)
      throw Error("split_order repeats a node");
    position[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(k);
  }
  std::size_t internal = 0;
  for (std::int32_t id = 0; id < size; ++id) {
    const Node& nd = tree.nodes[static_cast<std::size_t>(id)];
    if (nd.stats.count < 1) throw Error("node with empty count");
    if (nd.is_leaf()) {
      if (nd.left >= 0 || nd.right >= 0 || position[static_cast<std::size_t>(id)] >= 0)
        throw Error("leaf with children or a split_order entry");
      continue;
    }
    ++internal;
    if (position[static_cast<std::size_t>(id)] < 0)
      throw Error("internal node missing from split_order");
    if (nd.left < 0 || nd.left >= size || nd.right < 0 || nd.right >= size)
      throw Error("child index out of range");
    const Node& l = tree.nodes[static_cast<std::size_t>(nd.left)];
    const Node& r = tree.nodes[static_cast<std::size_t>(nd.right)];
    if (l.parent != id || r.parent != id) throw Error("child parent link broken");
    if (l.stats.count + r.stats.count != nd.stats.count)
      throw Error("child counts do not add up");
    double child_sse = l.stats.sse + r.stats.sse;
    if (child_sse > nd.stats.sse + 1e-9 * (1.0 + nd.stats.sse))
      throw Error("children exceed the parent squared error");
    for (std::int32_t c : {nd.left, nd.right}) {
      if (!tree.nodes[static_cast<std::size_t>(c)].is_leaf() &&
          position[static_cast<std::size_t>(c)] < position[static_cast<std::size_t>(id)])
        throw Error("split_order places a descendant before its ancestor");
    }
  }
  if (internal != tree.split_order.size())
    throw Error("split_order size does not match the internal node count");
}

}  // namespace trimforest
