#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trimforest/forest.hpp"
#include "trimforest/theory.hpp"

namespace trimforest {

// ============================================================================
// experiment plumbing
// ============================================================================

enum class ExperimentKind { snr_table, cv_compare, theory };

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::snr_table;
  // dataset source: a synthetic family, or a CSV path with its target column
  std::optional<Family> family;
  double beta = 0.0;
  std::size_t n = 500;  // snr_table: training rows per replicate; synthetic cv: dataset rows
  std::string csv_path;
  std::string target = "y";
  int folds = 6;
  int reps = 10;
  std::int32_t trees = 100;
  std::uint64_t seed = 0;
  int prop = 0;  // theory: proposition to check
  // method list for cv_compare; snr_table always runs its full column set
  std::vector<std::string> methods{"alpha_trim", "rf_default", "rf_tuned"};
  std::vector<std::int64_t> nmin_grid_override;  // snr_table RF-x grid; empty = default
  std::vector<double> alpha_grid_override;       // trim grid; empty = default
};

struct ResultRow {
  std::string method;
  int replicate = 0;
  int fold = 0;
  double rmspe = 0.0;
};

struct MethodSummary {
  std::string method;
  int replicates = 0;
  double mean_rmspe = 0.0;
  double rmspe_lo = 0.0;
  double rmspe_hi = 0.0;
  double ratio = 1.0;  // of replicate means against the baseline method
  double ratio_lo = 1.0;
  double ratio_hi = 1.0;
};

struct ResultTable {
  std::string baseline;
  std::vector<ResultRow> rows;  // sorted by (method, replicate, fold)
  std::vector<MethodSummary> summaries;
};

inline double rmspe_forest(const Forest& f, const Dataset& test, std::optional<double> alpha) {
  if (test.d != f.d) throw Error("test data feature count does not match the forest");
  double total = 0.0;
  for (std::size_t i = 0; i < test.n; ++i) {
    double e = test.y[i] - predict_forest(f, test.row(i), alpha);
    total += e * e;
  }
  return std::sqrt(total / double(test.n));
}

namespace detail {

struct MeanCi {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

// 95% z-interval over replicate-level values: mean +/- 1.96 sd / sqrt(R).
inline MeanCi mean_ci(const std::vector<double>& v) {
  MeanCi out;
  double n = double(v.size());
  for (double x : v) out.mean += x;
  out.mean /= n;
  double var = 0.0;
  if (v.size() > 1) {
    for (double x : v) var += (x - out.mean) * (x - out.mean);
    var /= (n - 1.0);
  }
  double half = 1.96 * std::sqrt(var / n);
  out.lo = out.mean - half;
  out.hi = out.mean + half;
  return out;
}

}  // namespace detail

// Per-method mean RMSPE with z-intervals, plus per-replicate ratios against
// the baseline method. Replicate values are fold means.
inline std::vector<MethodSummary> summarize(const std::vector<ResultRow>& rows,
                                            const std::string& baseline) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const ResultRow& r : rows) {
    auto& cell = acc[r.method][r.replicate];
    cell.first += r.rmspe;
    cell.second += 1;
  }
  if (!acc.count(baseline)) throw Error("baseline method '" + baseline + "' has no rows");

  std::map<int, double> base_means;
  for (const auto& [rep, cell] : acc.at(baseline))
    base_means[rep] = cell.first / cell.second;

  std::vector<MethodSummary> out;
  for (const auto& [method, reps] : acc) {
    std::vector<double> rep_means, ratios;
    for (const auto& [rep, cell] : reps) {
      double m = cell.first / cell.second;
      rep_means.push_back(m);
      auto it = base_means.find(rep);
      if (it == base_means.end())
        throw Error("method '" + method + "' has replicates the baseline lacks");
      if (it->second == 0.0) throw Error("baseline rmspe is zero; ratios are undefined");
      ratios.push_back(m / it->second);
    }
    detail::MeanCi rm = detail::mean_ci(rep_means);
    detail::MeanCi rt = detail::mean_ci(ratios);
    MethodSummary s;
    s.method = method;
    s.replicates = static_cast<int>(rep_means.size());
    s.mean_rmspe = rm.mean;
    s.rmspe_lo = rm.lo;
    s.rmspe_hi = rm.hi;
    s.ratio = rt.mean;
    s.ratio_lo = rt.lo;
    s.ratio_hi = rt.hi;
    out.push_back(s);
  }
  return out;
}

inline void sort_rows(std::vector<ResultRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.replicate != b.replicate) return a.replicate < b.replicate;
    return a.fold < b.fold;
  });
}

// ============================================================================
// tuning grids
// ============================================================================

inline const std::vector<std::int64_t>& snr_nmin_grid() {
  static const std::vector<std::int64_t> grid{5, 10, 20, 50, 100, 200, 300, 400, 500};
  return grid;
}

// {1, floor(sqrt(d)), floor(d/3), floor(2d/3), d-1}, deduplicated, values
// below 1 dropped.
inline std::vector<std::int32_t> mtry_grid(std::size_t d) {
  std::vector<std::int32_t> g{1, static_cast<std::int32_t>(std::sqrt(double(d))),
                              static_cast<std::int32_t>(d / 3),
                              static_cast<std::int32_t>(2 * d / 3),
                              static_cast<std::int32_t>(d) - 1};
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  g.erase(std::remove_if(g.begin(), g.end(), [](std::int32_t v) { return v < 1; }), g.end());
  return g;
}

// floor(2 * (n/2)^(i/30)) for i = 0..30, deduplicated; runs from 2 to n.
inline std::vector<std::int64_t> nmin_grid(std::size_t n) {
  if (n < 2) throw Error("nmin_grid needs n >= 2");
  std::vector<std::int64_t> g;
  for (int i = 0; i <= 30; ++i)
    g.push_back(static_cast<std::int64_t>(
        std::floor(2.0 * std::pow(double(n) / 2.0, double(i) / 30.0))));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

// ============================================================================
// node-size table (signal-to-noise sweep)
// ============================================================================

namespace detail {

// Mixed-SNR elbow design: five uniform features, response flat on the left
// half of the first one and steeply linear on the right, unit noise.
inline Dataset generate_snr_elbow(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.n = n;
  ds.d = 5;
  ds.x.resize(n * 5);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = ds.x.data() + i * 5;
    for (std::size_t j = 0; j < 5; ++j) row[j] = rng.uniform01();
    double mu = row[0] < 0.5 ? 0.0 : 10.0 * (row[0] - 0.5);
    ds.y[i] = mu + rng.normal();
  }
  ds.feature_names = {"x1", "x2", "x3", "x4", "x5"};
  return ds;
}

inline Dataset snr_dataset(const ExperimentSpec& spec, std::size_t n, std::uint64_t seed) {
  if (*spec.family == Family::linear_snr) {
    SyntheticSpec s;
    s.family = Family::linear_snr;
    s.n = n;
    s.beta = spec.beta;
    s.sigma2 = 1.0;
    s.normalize = false;
    s.seed = seed;
    return generate(s);
  }
  return generate_snr_elbow(n, seed);
}

}  // namespace detail

// One replicate per seed: fresh train and test draws, one forest per fixed
// node size, the node-size pick with the best out-of-bag error, and a
// trimmed forest grown at min node size 3 with its alpha chosen out of bag.
// Test RMSPE lands in one row per method, fold column 0.
inline ResultTable run_snr_table(const ExperimentSpec& spec) {
  if (spec.kind != ExperimentKind::snr_table) throw Error("spec kind is not snr_table");
  if (!spec.family || (*spec.family != Family::linear_snr && *spec.family != Family::elbow))
    throw Error("the node-size table runs on the linear_snr and elbow designs");
  if (spec.reps < 1) throw Error("reps must be at least 1");
  if (spec.n < 20) throw Error("training size must be at least 20");

  const std::size_t n_test = 3 * spec.n;
  const std::vector<std::int64_t>& grid =
      spec.nmin_grid_override.empty() ? snr_nmin_grid() : spec.nmin_grid_override;
  const std::vector<double> alphas =
      spec.alpha_grid_override.empty() ? default_alpha_grid() : spec.alpha_grid_override;
  ResultTable table;
  table.baseline = "AlphaTrim";

  for (int rep = 0; rep < spec.reps; ++rep) {
    std::uint64_t rs = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
    Dataset train = detail::snr_dataset(spec, spec.n, derive_seed(rs, 0));
    Dataset test = detail::snr_dataset(spec, n_test, derive_seed(rs, 1));

    double best_oob = 0.0, tuned_rmspe = 0.0;
    bool have_tuned = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::int64_t nmin = grid[i];
      ForestConfig fc;
      fc.n_trees = spec.trees;
      fc.min_node_size = nmin;
      fc.seed = derive_seed(rs, 100 + i);
      Forest f = fit_forest(train, fc);
      double r = rmspe_forest(f, test, std::nullopt);
      table.rows.push_back({"RF-" + std::to_string(nmin), rep, 0, r});
      double e = oob_error(f, train);
      if (!have_tuned || e < best_oob) {
        have_tuned = true;
        best_oob = e;
        tuned_rmspe = r;
      }
    }
    table.rows.push_back({"RF-tuned", rep, 0, tuned_rmspe});

    ForestConfig ac;
    ac.n_trees = spec.trees;
    ac.min_node_size = 3;
    ac.seed = derive_seed(rs, 7);
    ac.alpha_grid = alphas;
    Forest f = fit_forest(train, ac);
    double alpha = alpha_trim(f, train);
    table.rows.push_back({"AlphaTrim", rep, 0, rmspe_forest(f, test, alpha)});
  }

  sort_rows(table.rows);
  table.summaries = summarize(table.rows, table.baseline);
  return table;
}

// ============================================================================
// cross-validated comparison
// ============================================================================

// Per replicate: bootstrap the full dataset, fold the bootstrap, and score
// three methods per fold on the held-out fold. alpha_trim tunes mtry and
// alpha out of bag at min node size 3; rf_default is the stock forest;
// rf_tuned searches mtry by min node size out of bag. Out-of-bag ties keep
// the earliest grid point in ascending order.
inline ResultTable run_cv_compare(const ExperimentSpec& spec) {
  if (spec.kind != ExperimentKind::cv_compare) throw Error("spec kind is not cv_compare");
  if (spec.reps < 1) throw Error("reps must be at least 1");
  if (spec.folds < 2) throw Error("folds must be at least 2");
  if (spec.methods.empty()) throw Error("method list is empty");
  bool want_trim = false, want_default = false, want_tuned = false;
  for (const std::string& m : spec.methods) {
    if (m == "alpha_trim")
      want_trim = true;
    else if (m == "rf_default")
      want_default = true;
    else if (m == "rf_tuned")
      want_tuned = true;
    else
      throw Error("unknown method '" + m + "'; pick from alpha_trim, rf_default, rf_tuned");
  }

  Dataset data;
  if (!spec.csv_path.empty()) {
    data = load_csv(spec.csv_path, spec.target);
  } else if (spec.family) {
    SyntheticSpec s = default_spec(*spec.family, spec.n, derive_seed(spec.seed, 0xDA7A));
    if (*spec.family == Family::linear_snr) s.beta = spec.beta;
    data = generate(s);
  } else {
    throw Error("cv_compare needs a CSV path or a synthetic family");
  }
  if (static_cast<std::size_t>(spec.folds) > data.n)
    throw Error("folds exceed the dataset rows");

  const std::vector<std::int32_t> mgrid = mtry_grid(data.d);
  const std::vector<std::int64_t> ngrid = nmin_grid(data.n);
  const std::vector<double> alphas =
      spec.alpha_grid_override.empty() ? default_alpha_grid() : spec.alpha_grid_override;
  ResultTable table;
  table.baseline = want_trim ? "alpha_trim" : (want_default ? "rf_default" : "rf_tuned");

  for (int rep = 0; rep < spec.reps; ++rep) {
    std::uint64_t rs = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
    BootstrapSample boot = bootstrap_sample(data, derive_seed(rs, 0));
    Dataset bds = take_rows(data, boot.rows);
    FoldPlan plan = kfold(bds.n, spec.folds, derive_seed(rs, 1));

    for (int fold = 0; fold < spec.folds; ++fold) {
      std::vector<std::int32_t> tr, te;
      for (std::size_t i = 0; i < bds.n; ++i) {
        if (plan.assignment[i] == fold)
          te.push_back(static_cast<std::int32_t>(i));
        else
          tr.push_back(static_cast<std::int32_t>(i));
      }
      Dataset train = take_rows(bds, tr);
      Dataset test = take_rows(bds, te);
      std::uint64_t fs = derive_seed(rs, 2 + static_cast<std::uint64_t>(fold));

      if (want_trim) {
        double best_oob = 0.0, best_rmspe = 0.0;
        bool have = false;
        for (std::size_t mi = 0; mi < mgrid.size(); ++mi) {
          ForestConfig fc;
          fc.n_trees = spec.trees;
          fc.min_node_size = 3;
          fc.mtry = mgrid[mi];
          fc.seed = derive_seed(fs, 10 + mi);
          fc.alpha_grid = alphas;
          Forest f = fit_forest(train, fc);
          double alpha = alpha_trim(f, train);
          double e = oob_error(f, train, alpha);
          if (!have || e < best_oob) {
            have = true;
            best_oob = e;
            best_rmspe = rmspe_forest(f, test, alpha);
          }
        }
        table.rows.push_back({"alpha_trim", rep, fold, best_rmspe});
      }
      if (want_default) {
        ForestConfig fc;
        fc.n_trees = spec.trees;
        fc.min_node_size = 5;
        fc.mtry = std::max<std::int32_t>(1, static_cast<std::int32_t>(train.d / 3));
        fc.seed = derive_seed(fs, 5);
        Forest f = fit_forest(train, fc);
        table.rows.push_back({"rf_default", rep, fold, rmspe_forest(f, test, std::nullopt)});
      }
      if (want_tuned) {
        double best_oob = 0.0, best_rmspe = 0.0;
        bool have = false;
        for (std::size_t mi = 0; mi < mgrid.size(); ++mi) {
          for (std::size_t ni = 0; ni < ngrid.size(); ++ni) {
            ForestConfig fc;
            fc.n_trees = spec.trees;
            fc.min_node_size = ngrid[ni];
            fc.mtry = mgrid[mi];
            fc.seed = derive_seed(fs, 1000 + mi * 50 + ni);
            Forest f = fit_forest(train, fc);
            double e = oob_error(f, train);
            if (!have || e < best_oob) {
              have = true;
              best_oob = e;
              best_rmspe = rmspe_forest(f, test, std::nullopt);
            }
          }
        }
        table.rows.push_back({"rf_tuned", rep, fold, best_rmspe});
      }
    }
  }

  sort_rows(table.rows);
  table.summaries = summarize(table.rows, table.baseline);
  return table;
}

// ============================================================================
// theory checks
// ============================================================================

struct TheoryReport {
  int prop = 0;
  bool pass = false;
  std::vector<std::string> lines;  // human-readable, includes timings
  std::string csv_header;          // deterministic artifact for --out
  std::vector<std::string> csv_rows;
};

namespace detail {

inline std::string fmt(double v) { return real_to_string(v); }

}  // namespace detail

// Checks one proposition at its declared tolerance. Timing-derived numbers
// (prop 4 slopes) go to the report lines only; csv rows carry nothing that
// varies between identically seeded runs.
inline TheoryReport run_theory(const ExperimentSpec& spec) {
  if (spec.kind != ExperimentKind::theory) throw Error("spec kind is not theory");
  TheoryReport rep;
  rep.prop = spec.prop;

  if (spec.prop == 1 || spec.prop == 2) {
    McTruth truth;
    truth.stump = spec.prop == 2;
    truth.mu1 = 0.0;
    truth.mu2 = truth.stump ? 2.0 : 0.0;
    truth.sigma2 = 1.0;
    double rate = mc_consistency(truth, spec.n, 2, spec.reps, spec.seed);
    rep.pass = rate >= 0.95;
    rep.lines.push_back(std::string(truth.stump ? "stump" : "root") +
                        "-truth selection rate at n=" + std::to_string(spec.n) + ": " +
                        detail::fmt(rate) + " (needs >= 0.95)");
    rep.csv_header = "prop,n,d,reps,rate";
    rep.csv_rows.push_back(std::to_string(spec.prop) + "," + std::to_string(spec.n) + ",2," +
                           std::to_string(spec.reps) + "," + detail::fmt(rate));
    return rep;
  }

  if (spec.prop == 3) {
    struct Case {
      int m, k;
      double beta, sigma2;
    };
    const Case cases[] = {{10, 5, 2.0, 1.0}, {5, 20, 1.0, 4.0}, {50, 2, 0.0, 1.0}};
    rep.pass = true;
    rep.csv_header = "m,k,beta,sigma2,reps,sim_mean,sim_se,closed_form";
    int ci = 0;
    for (const Case& c : cases) {
      double formula = mspe_closed_form(c.m, c.k, c.beta, c.sigma2);
      MspeEstimate est =
          mspe_simulate(c.m, c.k, c.beta, c.sigma2, spec.reps, derive_seed(spec.seed, ci++));
      bool ok = std::abs(est.mean - formula) <= 3.0 * est.se;
      rep.pass = rep.pass && ok;
      rep.lines.push_back("m=" + std::to_string(c.m) + " k=" + std::to_string(c.k) +
                          " beta=" + detail::fmt(c.beta) + " sigma2=" + detail::fmt(c.sigma2) +
                          ": sim " + detail::fmt(est.mean) + " +/- " + detail::fmt(est.se) +
                          ", closed form " + detail::fmt(formula) +
                          (ok ? " (within 3 se)" : " (OUTSIDE 3 se)"));
      rep.csv_rows.push_back(std::to_string(c.m) + "," + std::to_string(c.k) + "," +
                             detail::fmt(c.beta) + "," + detail::fmt(c.sigma2) + "," +
                             std::to_string(spec.reps) + "," + detail::fmt(est.mean) + "," +
                             detail::fmt(est.se) + "," + detail::fmt(formula));
    }
    return rep;
  }

  if (spec.prop == 4) {
    const std::vector<std::size_t> grid{1000, 4000, 16000, 64000};
    auto rows = complexity_bench(grid, 2, 1, spec.reps, spec.seed);
    std::vector<std::pair<double, double>> fit_pts, prune_pts, oob_pts;
    rep.csv_header = "n,d,splits";
    for (const ComplexityRow& r : rows) {
      fit_pts.push_back({double(r.n), r.fit_ms});
      prune_pts.push_back({double(r.n), r.prune_ms});
      oob_pts.push_back({double(r.n), r.oob_ms});
      rep.lines.push_back("n=" + std::to_string(r.n) + " splits=" + std::to_string(r.splits) +
                          " fit=" + detail::fmt(r.fit_ms) + "ms prune=" +
                          detail::fmt(r.prune_ms) + "ms oob=" + detail::fmt(r.oob_ms) + "ms");
      rep.csv_rows.push_back(std::to_string(r.n) + "," + std::to_string(r.d) + "," +
                             std::to_string(r.splits));
    }
    double fit_slope = loglog_slope(fit_pts);
    double prune_slope = loglog_slope(prune_pts);
    double oob_slope = loglog_slope(oob_pts);

    auto base = complexity_bench({16000}, 2, 1, spec.reps, derive_seed(spec.seed, 77));
    auto wide = complexity_bench({16000}, 4, 1, spec.reps, derive_seed(spec.seed, 78));
    double per_split_base = base[0].prune_ms / double(base[0].splits);
    double per_split_wide = wide[0].prune_ms / double(wide[0].splits);
    double d_ratio = per_split_wide / per_split_base;

    bool ok_fit = fit_slope >= 1.0 && fit_slope <= 1.4;
    bool ok_prune = prune_slope >= 0.7 && prune_slope <= 1.3;
    bool ok_d = d_ratio >= 0.8 && d_ratio <= 1.2;
    rep.pass = ok_fit && ok_prune && ok_d;
    rep.lines.push_back("fit slope " + detail::fmt(fit_slope) + " (needs [1.0, 1.4])" +
                        (ok_fit ? "" : " FAIL"));
    rep.lines.push_back("prune slope " + detail::fmt(prune_slope) + " (needs [0.7, 1.3])" +
                        (ok_prune ? "" : " FAIL"));
    rep.lines.push_back("oob slope " + detail::fmt(oob_slope) +
                        " (reported; cache effects dominate past L2)");
    rep.lines.push_back("prune per-split time ratio at doubled d " + detail::fmt(d_ratio) +
                        " (needs [0.8, 1.2])" + (ok_d ? "" : " FAIL"));
    return rep;
  }

  throw Error("prop must be 1, 2, 3, or 4");
}

// ============================================================================
// result files
// ============================================================================

inline void write_result_rows(const ResultTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write results file: " + path);
  out << "method,replicate,fold,rmspe\n";
  for (const ResultRow& r : t.rows)
    out << r.method << ',' << r.replicate << ',' << r.fold << ',' << real_to_string(r.rmspe)
        << '\n';
  if (!out) throw Error("failed writing results file: " + path);
}

inline void write_result_summary(const ResultTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write summary file: " + path);
  out << "method,replicates,mean_rmspe,rmspe_ci_lo,rmspe_ci_hi,ratio_vs_baseline,"
         "ratio_ci_lo,ratio_ci_hi\n";
  for (const MethodSummary& s : t.summaries)
    out << s.method << ',' << s.replicates << ',' << real_to_string(s.mean_rmspe) << ','
        << real_to_string(s.rmspe_lo) << ',' << real_to_string(s.rmspe_hi) << ','
        << real_to_string(s.ratio) << ',' << real_to_string(s.ratio_lo) << ','
        << real_to_string(s.ratio_hi) << '\n';
  if (!out) throw Error("failed writing summary file: " + path);
}

inline std::string summary_path(const std::string& out) {
  const std::string csv = ".csv";
  if (out.size() > csv.size() && out.substr(out.size() - csv.size()) == csv)
    return out.substr(0, out.size() - csv.size()) + "_summary.csv";
  return out + "_summary.csv";
}

inline std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

// Every flag and seed of a benchmark run, captured next to its outputs.
inline void write_manifest(const std::string& command,
                           const std::map<std::string, std::string>& flags,
                           const std::string& path) {
  nlohmann::json doc;
  doc["command"] = command;
  doc["flags"] = flags;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest file: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing manifest file: " + path);
}

}  // namespace trimforest
