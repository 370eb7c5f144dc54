#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trimforest/parallel.hpp"
#include "trimforest/trim.hpp"

namespace trimforest {

// ============================================================================
// configuration
// ============================================================================

// Inclusive arithmetic grid start, start+step, ..., stop; the endpoint is
// kept when it lands within 1e-9 of a grid step.
inline std::vector<double> make_alpha_grid(double start, double stop, double step) {
  if (!(start >= 0)) throw Error("alpha grid start must be nonnegative");
  if (!(step > 0)) throw Error("alpha grid step must be positive");
  if (stop < start) throw Error("alpha grid stop must not precede start");
  auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) grid[i] = start + double(i) * step;
  return grid;
}

inline std::vector<double> default_alpha_grid() { return make_alpha_grid(0.0, 3.0, 0.1); }

struct ForestConfig {
  std::int32_t n_trees = 750;
  std::int64_t min_node_size = 3;
  std::int32_t mtry = 0;  // 0 means max(1, floor(d/3)), resolved at fit time
  std::uint64_t seed = 0;
  std::vector<double> alpha_grid = default_alpha_grid();
};

// Per-alpha pruning state for every tree in a forest.
struct ForestTrim {
  double alpha = 0.0;
  std::vector<std::vector<std::uint8_t>> merged;  // [tree][node]
};

struct Forest {
  ForestConfig config;
  std::size_t n_train = 0;
  std::size_t d = 0;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::vector<Tree> trees;
  std::vector<std::vector<std::uint8_t>> oob_masks;  // [tree][row], 1 = out of bag
  std::vector<ForestTrim> trims;                     // one entry per grid alpha
  std::optional<double> selected_alpha;
};

// ============================================================================
// fitting and prediction
// ============================================================================

// One bootstrap sample and one tree per slot; both streams derive from the
// master seed and the tree index, so any thread count gives the same forest.
inline Forest fit_forest(const Dataset& ds, ForestConfig cfg) {
  check_dataset(ds);
  if (cfg.n_trees < 1) throw Error("n_trees must be at least 1");
  cfg.mtry = resolve_mtry(cfg.mtry, ds.d);

  Forest f;
  f.config = cfg;
  f.n_train = ds.n;
  f.d = ds.d;
  f.feature_names = ds.feature_names;
  f.target_name = ds.target_name;
  f.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  f.oob_masks.resize(static_cast<std::size_t>(cfg.n_trees));

  parallel_for(static_cast<std::size_t>(cfg.n_trees), [&](std::size_t b) {
    BootstrapSample boot = bootstrap_sample(ds, derive_seed(cfg.seed, 2 * b));
    TreeConfig tc{cfg.min_node_size, cfg.mtry, derive_seed(cfg.seed, 2 * b + 1)};
    f.trees[b] = fit_tree(ds, std::move(boot.rows), tc);
    f.oob_masks[b] = std::move(boot.oob);
  });
  return f;
}

inline const ForestTrim& find_trim(const Forest& f, double alpha) {
  for (const ForestTrim& t : f.trims)
    if (t.alpha == alpha) return t;
  throw Error("alpha " + real_to_string(alpha) + " has no stored trim; run alpha_trim first");
}

// Mean over trees in tree-index order. With an alpha, each tree is read
// through its stored merge masks for that grid value; without one, the
// selected alpha applies when present, otherwise the forest is untrimmed.
inline double predict_forest(const Forest& f, const double* x, std::optional<double> alpha) {
  const ForestTrim* trim = alpha ? &find_trim(f, *alpha) : nullptr;
  double sum = 0.0;
  for (std::size_t b = 0; b < f.trees.size(); ++b)
    sum += trim ? predict_collapsed(f.trees[b], trim->merged[b], x)
                : predict_tree(f.trees[b], x);
  return sum / double(f.trees.size());
}

inline double predict_forest(const Forest& f, const double* x) {
  return predict_forest(f, x, f.selected_alpha);
}

// Mean squared error over training rows with at least one out-of-bag tree,
// each predicted by exactly its out-of-bag trees. Rows that are in-bag
// everywhere are excluded.
inline double oob_error(const Forest& f, const Dataset& ds, std::optional<double> alpha) {
  if (ds.n != f.n_train)
    throw Error("out-of-bag evaluation needs the training dataset (row count differs)");
  const ForestTrim* trim = alpha ? &find_trim(f, *alpha) : nullptr;
  double total = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t b = 0; b < f.trees.size(); ++b) {
      if (!f.oob_masks[b][i]) continue;
      sum += trim ? predict_collapsed(f.trees[b], trim->merged[b], ds.row(i))
                  : predict_tree(f.trees[b], ds.row(i));
      ++m;
    }
    if (m == 0) continue;
    double e = ds.y[i] - sum / double(m);
    total += e * e;
    ++covered;
  }
  if (covered == 0)
    throw Error("no training row is out of bag for any tree; grow more trees");
  return total / double(covered);
}

inline double oob_error(const Forest& f, const Dataset& ds) {
  return oob_error(f, ds, std::nullopt);
}

// ============================================================================
// alpha selection
// ============================================================================

// Prunes every tree at every grid alpha (trees are never refit), then picks
// the alpha with the smallest out-of-bag error; ties go to the smallest
// alpha. The trims and the selection are stored on the forest.
inline double alpha_trim(Forest& f, const Dataset& ds) {
  const std::vector<double>& grid = f.config.alpha_grid;
  if (grid.empty()) throw Error("alpha grid is empty");
  for (std::size_t a = 1; a < grid.size(); ++a)
    if (!(grid[a] > grid[a - 1])) throw Error("alpha grid must increase strictly");

  f.trims.assign(grid.size(), {});
  for (std::size_t a = 0; a < grid.size(); ++a) {
    f.trims[a].alpha = grid[a];
    f.trims[a].merged.resize(f.trees.size());
    parallel_for(f.trees.size(), [&, a](std::size_t b) {
      try {
        f.trims[a].merged[b] = prune(f.trees[b], grid[a]).merged;
      } catch (const VarianceFloorError& e) {
        throw VarianceFloorError(std::string(e.what()) + " (tree " + std::to_string(b) +
                                 ", alpha " + real_to_string(grid[a]) + ")");
      }
    });
  }

  std::size_t best = 0;
  double best_err = oob_error(f, ds, grid[0]);
  for (std::size_t a = 1; a < grid.size(); ++a) {
    double err = oob_error(f, ds, grid[a]);
    if (err < best_err) {
      best_err = err;
      best = a;
    }
  }
  f.selected_alpha = grid[best];
  return grid[best];
}

// ============================================================================
// model file
// ============================================================================

inline constexpr const char* kModelFormat = "trimforest-model";
inline constexpr int kModelVersion = 1;

// Self-describing JSON document. Reals are written in their shortest
// round-trip decimal form, so save/load/save is byte-stable and every
// stored value reloads bit-exact.
inline void save_model(const Forest& f, const std::string& path) {
  nlohmann::json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelVersion;
  doc["target"] = f.target_name;
  doc["feature_names"] = f.feature_names;
  doc["n_train"] = f.n_train;
  doc["config"] = {{"n_trees", f.config.n_trees},
                   {"min_node_size", f.config.min_node_size},
                   {"mtry", f.config.mtry},
                   {"seed", f.config.seed},
                   {"alpha_grid", f.config.alpha_grid}};

  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& nd : t.nodes)
      nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.stats.count,
                       nd.stats.sum, nd.stats.sse, nd.stats.mean});
    trees.push_back({{"split_order", t.split_order}, {"nodes", std::move(nodes)}});
  }
  doc["trees"] = std::move(trees);

  nlohmann::json oob = nlohmann::json::array();
  for (const auto& mask : f.oob_masks) {
    std::string bits(mask.size(), '0');
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) bits[i] = '1';
    oob.push_back(std::move(bits));
  }
  doc["oob"] = std::move(oob);

  nlohmann::json trims = nlohmann::json::array();
  for (const ForestTrim& ft : f.trims) {
    nlohmann::json per_tree = nlohmann::json::array();
    for (const auto& mask : ft.merged) {
      nlohmann::json ids = nlohmann::json::array();
      for (std::size_t v = 0; v < mask.size(); ++v)
        if (mask[v]) ids.push_back(v);
      per_tree.push_back(std::move(ids));
    }
    trims.push_back({{"alpha", ft.alpha}, {"merged", std::move(per_tree)}});
  }
  doc["trims"] = std::move(trims);

  if (f.selected_alpha)
    doc["selected_alpha"] = *f.selected_alpha;
  else
    doc["selected_alpha"] = nullptr;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file: " + path);
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing model file: " + path);
}

inline Forest load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const std::exception& e) {
    throw Error("model file " + path + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kModelFormat)
      throw Error("model file " + path + " has an unknown format tag");
    if (doc.at("version").get<int>() != kModelVersion)
      throw Error("model file " + path + " has an unsupported version");

    Forest f;
    f.target_name = doc.at("target").get<std::string>();
    f.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    f.n_train = doc.at("n_train").get<std::size_t>();
    f.d = f.feature_names.size();
    const auto& cfg = doc.at("config");
    f.config.n_trees = cfg.at("n_trees").get<std::int32_t>();
    f.config.min_node_size = cfg.at("min_node_size").get<std::int64_t>();
    f.config.mtry = cfg.at("mtry").get<std::int32_t>();
    f.config.seed = cfg.at("seed").get<std::uint64_t>();
    f.config.alpha_grid = cfg.at("alpha_grid").get<std::vector<double>>();

    for (const auto& jt : doc.at("trees")) {
      Tree t;
      t.split_order = jt.at("split_order").get<std::vector<std::int32_t>>();
      for (const auto& jn : jt.at("nodes")) {
        Node nd;
        nd.feature = jn.at(0).get<std::int32_t>();
        nd.threshold = jn.at(1).get<double>();
        nd.left = jn.at(2).get<std::int32_t>();
        nd.right = jn.at(3).get<std::int32_t>();
        nd.stats.count = jn.at(4).get<std::int64_t>();
        nd.stats.sum = jn.at(5).get<double>();
        nd.stats.sse = jn.at(6).get<double>();
        nd.stats.mean = jn.at(7).get<double>();
        nd.stats.sum2 = nd.stats.sse + nd.stats.sum * nd.stats.sum / double(nd.stats.count);
        t.nodes.push_back(nd);
      }
      for (std::size_t v = 0; v < t.nodes.size(); ++v) {
        const Node& nd = t.nodes[v];
        if (!nd.is_leaf()) {
          if (nd.left < 0 || nd.right < 0 ||
              static_cast<std::size_t>(nd.left) >= t.nodes.size() ||
              static_cast<std::size_t>(nd.right) >= t.nodes.size())
            throw Error("model file " + path + " holds a tree with broken child links");
          t.nodes[static_cast<std::size_t>(nd.left)].parent = static_cast<std::int32_t>(v);
          t.nodes[static_cast<std::size_t>(nd.right)].parent = static_cast<std::int32_t>(v);
        }
      }
      check_tree(t);
      f.trees.push_back(std::move(t));
    }
    if (f.trees.size() != static_cast<std::size_t>(f.config.n_trees))
      throw Error("model file " + path + " tree count does not match its config");

    for (const auto& jm : doc.at("oob")) {
      auto bits = jm.get<std::string>();
      if (bits.size() != f.n_train)
        throw Error("model file " + path + " has an out-of-bag mask of the wrong length");
      std::vector<std::uint8_t> mask(bits.size());
      for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != '0' && bits[i] != '1')
          throw Error("model file " + path + " has a malformed out-of-bag mask");
        mask[i] = bits[i] == '1';
      }
      f.oob_masks.push_back(std::move(mask));
    }
    if (f.oob_masks.size() != f.trees.size())
      throw Error("model file " + path + " out-of-bag mask count does not match its trees");

    for (const auto& jt : doc.at("trims")) {
      ForestTrim ft;
      ft.alpha = jt.at("alpha").get<double>();
      const auto& per_tree = jt.at("merged");
      if (per_tree.size() != f.trees.size())
        throw Error("model file " + path + " trim entry does not cover every tree");
      for (std::size_t b = 0; b < per_tree.size(); ++b) {
        std::vector<std::uint8_t> mask(f.trees[b].nodes.size(), 0);
        for (const auto& jid : per_tree[b]) {
          auto v = jid.get<std::size_t>();
          if (v >= mask.size())
            throw Error("model file " + path + " trim names a node out of range");
          mask[v] = 1;
        }
        ft.merged.push_back(std::move(mask));
      }
      f.trims.push_back(std::move(ft));
    }

    if (!doc.at("selected_alpha").is_null())
      f.selected_alpha = doc.at("selected_alpha").get<double>();
    return f;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("model file " + path + " is malformed: " + e.what());
  }
}

}  // namespace trimforest
