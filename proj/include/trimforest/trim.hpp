#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trimforest/tree.hpp"

namespace trimforest {

// ============================================================================
// penalties
// ============================================================================

// Natural-log model complexity penalties, evaluated at the local node size:
// p0 charges the single-mean model, p1 the split model.
struct Penalty {
  double root_coefficient = 2.0;
  double split_coefficient = 5.0;

  double p0(std::int64_t n) const { return root_coefficient * std::log(double(n)); }
  double p1(std::int64_t n) const { return split_coefficient * std::log(double(n)); }
};

// ============================================================================
// information values
// ============================================================================

// Variance floor: estimates below 1e-15 are replaced by half the terminal
// variance of the node under evaluation; if that is still below the floor
// the data cannot support the computation at this node size.
inline double floored_variance(double estimate, const NodeStats& node) {
  if (estimate >= kVarianceFloor) return estimate;
  double fallback = node.sse / double(node.count) / 2.0;
  if (fallback < kVarianceFloor)
    throw VarianceFloorError(
        "variance estimate below 1e-15 even after the terminal fallback; "
        "refit with a larger min node size");
  return fallback;
}

// Information value of a node modeled as a single leaf, with its own
// maximum-likelihood variance.
inline double parent_information(const NodeStats& node) {
  double v = floored_variance(node.sse / double(node.count), node);
  return double(node.count) * std::log(kTwoPi * v) + double(node.count);
}

// Both children are leaves in the current tree: they share a pooled variance
// from their summed squared errors over the parent count.
inline std::pair<double, double> child_information_case1(const NodeStats& parent,
                                                         const NodeStats& left,
                                                         const NodeStats& right) {
  double v = floored_variance((left.sse + right.sse) / double(parent.count), parent);
  double il = double(left.count) * std::log(kTwoPi * v) + left.sse / v;
  double ir = double(right.count) * std::log(kTwoPi * v) + right.sse / v;
  return {il, ir};
}

// One child is a leaf while its sibling kept a subtree: the leaf child's
// value pools its own squared error with the sibling subtree's current
// terminal squared error, again over the parent count.
inline double child_information_case2(const NodeStats& parent,
                                      const NodeStats& undefined_child,
                                      double defined_child_terminal_sse) {
  double v = floored_variance(
      (undefined_child.sse + defined_child_terminal_sse) / double(parent.count), parent);
  return double(undefined_child.count) * std::log(kTwoPi * v) + undefined_child.sse / v;
}

// ============================================================================
// pruning
// ============================================================================

// A pruned view of a tree. The base tree is untouched; merged[v] set on an
// internal node means its split and everything below collapsed into a leaf.
// The flag is closed downward over internal descendants.
struct TrimmedTree {
  const Tree* base = nullptr;
  double alpha = 0.0;
  std::vector<std::uint8_t> merged;
};

struct PruneCounters {
  std::size_t decisions = 0;  // one per internal node, by construction
};

// Walks split_order in reverse chronological order, accumulating information
// values upward. At each internal node N with children values I_L and I_R,
// the subtree is merged into a leaf when
//   I_N + alpha * p0(|N|) <= I_L + I_R + alpha * p1(|N|)
// (ties merge); otherwise the node keeps its split and stores
//   I_N <- I_L + I_R + alpha * (p1(|N|) - p0(|N|)).
// Merging resets the node to the undefined state. Terminal squared errors
// of kept subtrees are maintained incrementally, so the pass costs O(K).
inline TrimmedTree prune(const Tree& tree, double alpha, const Penalty& penalty = {},
                         PruneCounters* counters = nullptr) {
  if (!(alpha >= 0)) throw Error("alpha must be a nonnegative real");
  const auto& nodes = tree.nodes;
  std::vector<double> info(nodes.size(), 0.0);
  std::vector<std::uint8_t> defined(nodes.size(), 0);
  std::vector<double> term_sse(nodes.size());
  std::vector<std::uint8_t> decision(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) term_sse[i] = nodes[i].stats.sse;

  for (auto it = tree.split_order.rbegin(); it != tree.split_order.rend(); ++it) {
    const std::int32_t id = *it;
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    const auto li = static_cast<std::size_t>(nd.left);
    const auto ri = static_cast<std::size_t>(nd.right);
    try {
      double i_n = parent_information(nd.stats);
      double i_l, i_r;
      if (!defined[li] && !defined[ri]) {
        std::tie(i_l, i_r) = child_information_case1(nd.stats, nodes[li].stats, nodes[ri].stats);
      } else if (!defined[li]) {
        i_l = child_information_case2(nd.stats, nodes[li].stats, term_sse[ri]);
        i_r = info[ri];
      } else if (!defined[ri]) {
        i_r = child_information_case2(nd.stats, nodes[ri].stats, term_sse[li]);
        i_l = info[li];
      } else {
        i_l = info[li];
        i_r = info[ri];
      }
      if (counters) ++counters->decisions;
      double p0 = penalty.p0(nd.stats.count);
      double p1 = penalty.p1(nd.stats.count);
      const auto ui = static_cast<std::size_t>(id);
      if (i_n + alpha * p0 <= i_l + i_r + alpha * p1) {
        decision[ui] = 1;
        defined[ui] = 0;
        term_sse[ui] = nd.stats.sse;
      } else {
        info[ui] = i_l + i_r + alpha * (p1 - p0);
        defined[ui] = 1;
        term_sse[ui] = term_sse[li] + term_sse[ri];
      }
    } catch (const VarianceFloorError& e) {
      throw VarianceFloorError(std::string(e.what()) + " (node " + std::to_string(id) + ")");
    }
  }

  // Close the merge set downward so routing can stop at the first flag.
  TrimmedTree out{&tree, alpha, std::move(decision)};
  std::vector<std::pair<std::int32_t, std::uint8_t>> stack{{tree.root, 0}};
  while (!stack.empty()) {
    auto [v, inherited] = stack.back();
    stack.pop_back();
    const Node& nd = nodes[static_cast<std::size_t>(v)];
    if (nd.is_leaf()) continue;
    auto& flag = out.merged[static_cast<std::size_t>(v)];
    flag = static_cast<std::uint8_t>(flag | inherited);
    stack.push_back({nd.left, flag});
    stack.push_back({nd.right, flag});
  }
  return out;
}

inline double predict_collapsed(const Tree& tree, const std::vector<std::uint8_t>& merged,
                                const double* x) {
  std::int32_t v = tree.root;
  for (;;) {
    const Node& nd = tree.nodes[static_cast<std::size_t>(v)];
    if (nd.is_leaf() || merged[static_cast<std::size_t>(v)]) return nd.stats.mean;
    v = x[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
}

inline double predict_trimmed(const TrimmedTree& tt, const double* x) {
  return predict_collapsed(*tt.base, tt.merged, x);
}

// Terminal regions of the collapsed tree.
inline std::size_t leaf_count(const Tree& tree, const std::vector<std::uint8_t>& merged) {
  std::size_t leaves = 0;
  std::vector<std::int32_t> stack{tree.root};
  while (!stack.empty()) {
    std::int32_t v = stack.back();
    stack.pop_back();
    const Node& nd = tree.nodes[static_cast<std::size_t>(v)];
    if (nd.is_leaf() || merged[static_cast<std::size_t>(v)]) {
      ++leaves;
      continue;
    }
    stack.push_back(nd.left);
    stack.push_back(nd.right);
  }
  return leaves;
}

inline std::size_t leaf_count(const TrimmedTree& tt) { return leaf_count(*tt.base, tt.merged); }

}  // namespace trimforest
