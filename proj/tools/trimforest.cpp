#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <trimforest/trimforest.hpp>

namespace {

using namespace trimforest;

// ============================================================================
// flag parsing helpers
// ============================================================================

Family parse_family(const std::string& s) {
  std::optional<Family> f = family_from_name(s);
  if (!f)
    throw Error("unknown family '" + s +
                "'; pick from constant, elbow, logistic, sine, linear_snr");
  return *f;
}

std::vector<double> parse_alpha_grid(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(':', start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (parts.size() != 3) throw Error("alpha grid must look like start:stop:step");
  std::optional<double> a = parse_real(parts[0]);
  std::optional<double> b = parse_real(parts[1]);
  std::optional<double> c = parse_real(parts[2]);
  if (!a || !b || !c) throw Error("alpha grid must look like start:stop:step");
  return make_alpha_grid(*a, *b, *c);
}

std::vector<std::int64_t> parse_nmin_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(',', start);
    std::string tok = s.substr(start, pos - start);
    std::optional<long long> v = parse_int(tok);
    if (!v || *v < 2) throw Error("node-size grid entries must be integers >= 2");
    out.push_back(*v);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_int64(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void require_feature_match(const Forest& f, const std::vector<std::string>& names) {
  if (names == f.feature_names) return;
  std::string expected;
  for (std::size_t i = 0; i < f.feature_names.size(); ++i) {
    if (i) expected += ", ";
    expected += f.feature_names[i];
  }
  throw Error("data features do not match the model (expected columns: " + expected + ")");
}

// ============================================================================
// commands
// ============================================================================

struct SimulateArgs {
  std::string family, out;
  std::size_t n = 1000;
  double beta = 1.0, sigma2 = 0.0;
  bool beta_set = false, sigma2_set = false;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
  SyntheticSpec spec = default_spec(parse_family(a.family), a.n, a.seed);
  if (a.beta_set) spec.beta = a.beta;
  if (a.sigma2_set) spec.sigma2 = a.sigma2;
  Dataset ds = generate(spec);
  write_csv(ds, a.out);
  std::cout << "wrote " << a.out << ": family=" << a.family << " n=" << ds.n << " d=" << ds.d
            << "\n";
  return 0;
}

struct FitArgs {
  std::string data, target = "y", out;
  std::int32_t trees = 750;
  std::int32_t mtry = 0;
  std::int64_t min_node_size = 3;
  std::uint64_t seed = 0;
};

int run_fit(const FitArgs& a) {
  Dataset ds = load_csv(a.data, a.target);
  ForestConfig fc;
  fc.n_trees = a.trees;
  fc.min_node_size = a.min_node_size;
  fc.mtry = a.mtry;
  fc.seed = a.seed;
  Forest f = fit_forest(ds, fc);
  save_model(f, a.out);
  std::cout << "wrote " << a.out << ": trees=" << f.config.n_trees << " n=" << f.n_train
            << " d=" << f.d << " oob_mse=" << real_to_string(oob_error(f, ds)) << "\n";
  return 0;
}

struct TrimArgs {
  std::string model, data, target, out, alpha_grid = "0:3:0.1";
};

int run_trim(const TrimArgs& a) {
  Forest f = load_model(a.model);
  Dataset ds = load_csv(a.data, a.target.empty() ? f.target_name : a.target);
  require_feature_match(f, ds.feature_names);
  f.config.alpha_grid = parse_alpha_grid(a.alpha_grid);
  double alpha = alpha_trim(f, ds);
  save_model(f, a.out);
  std::cout << "wrote " << a.out << ": alpha=" << real_to_string(alpha)
            << " oob_mse=" << real_to_string(oob_error(f, ds, alpha)) << "\n";
  return 0;
}

struct PredictArgs {
  std::string model, data, target, out;
};

int run_predict(const PredictArgs& a) {
  Forest f = load_model(a.model);
  Dataset ds = load_feature_csv(a.data, a.target.empty() ? f.target_name : a.target);
  require_feature_match(f, ds.feature_names);
  std::ofstream outf(a.out, std::ios::binary);
  if (!outf) throw Error("cannot write predictions file: " + a.out);
  outf << "prediction\n";
  for (std::size_t i = 0; i < ds.n; ++i)
    outf << real_to_string(predict_forest(f, ds.row(i), f.selected_alpha)) << '\n';
  if (!outf) throw Error("failed writing predictions file: " + a.out);
  std::cout << "wrote " << a.out << ": " << ds.n << " predictions"
            << (f.selected_alpha ? " at alpha=" + real_to_string(*f.selected_alpha)
                                 : " (untrimmed model)")
            << "\n";
  return 0;
}

void print_summaries(const ResultTable& t) {
  for (const MethodSummary& s : t.summaries)
    std::cout << s.method << ": mean_rmspe=" << real_to_string(s.mean_rmspe) << " ratio_vs_"
              << t.baseline << "=" << real_to_string(s.ratio) << "\n";
}

struct BenchSnrArgs {
  std::string family, out, alpha_grid, nmin_grid;
  double beta = 0.0;
  std::size_t n = 500;
  std::int32_t trees = 100;
  int reps = 10;
  std::uint64_t seed = 0;
};

int run_bench_snr(const BenchSnrArgs& a) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::snr_table;
  spec.family = parse_family(a.family);
  spec.beta = a.beta;
  spec.n = a.n;
  spec.trees = a.trees;
  spec.reps = a.reps;
  spec.seed = a.seed;
  if (!a.nmin_grid.empty()) spec.nmin_grid_override = parse_nmin_list(a.nmin_grid);
  if (!a.alpha_grid.empty()) spec.alpha_grid_override = parse_alpha_grid(a.alpha_grid);

  ResultTable t = run_snr_table(spec);
  write_result_rows(t, a.out);
  write_result_summary(t, summary_path(a.out));

  std::map<std::string, std::string> flags;
  flags["family"] = a.family;
  flags["beta"] = real_to_string(spec.beta);
  flags["n"] = std::to_string(spec.n);
  flags["trees"] = std::to_string(spec.trees);
  flags["reps"] = std::to_string(spec.reps);
  flags["seed"] = std::to_string(spec.seed);
  flags["nmin-grid"] =
      join_int64(spec.nmin_grid_override.empty() ? snr_nmin_grid() : spec.nmin_grid_override);
  flags["alpha-grid"] = a.alpha_grid.empty() ? "0:3:0.1" : a.alpha_grid;
  flags["out"] = a.out;
  write_manifest("bench-snr", flags, manifest_path(a.out));

  print_summaries(t);
  std::cout << "wrote " << a.out << ", " << summary_path(a.out) << ", " << manifest_path(a.out)
            << "\n";
  return 0;
}

struct BenchCvArgs {
  std::string data, target = "y", family, out, alpha_grid;
  double beta = 1.0;
  std::size_t n = 1000;
  int folds = 6, reps = 10;
  std::int32_t trees = 100;
  std::uint64_t seed = 0;
};

int run_bench_cv(const BenchCvArgs& a) {
  if (a.data.empty() == a.family.empty())
    throw Error("pass exactly one of --data or --family");
  ExperimentSpec spec;
  spec.kind = ExperimentKind::cv_compare;
  if (!a.data.empty()) {
    spec.csv_path = a.data;
    spec.target = a.target;
  } else {
    spec.family = parse_family(a.family);
    spec.beta = a.beta;
    spec.n = a.n;
  }
  spec.folds = a.folds;
  spec.reps = a.reps;
  spec.trees = a.trees;
  spec.seed = a.seed;
  if (!a.alpha_grid.empty()) spec.alpha_grid_override = parse_alpha_grid(a.alpha_grid);

  ResultTable t = run_cv_compare(spec);
  write_result_rows(t, a.out);
  write_result_summary(t, summary_path(a.out));

  std::map<std::string, std::string> flags;
  if (!a.data.empty()) {
    flags["data"] = a.data;
    flags["target"] = a.target;
  } else {
    flags["family"] = a.family;
    flags["beta"] = real_to_string(a.beta);
    flags["n"] = std::to_string(a.n);
  }
  flags["folds"] = std::to_string(spec.folds);
  flags["reps"] = std::to_string(spec.reps);
  flags["trees"] = std::to_string(spec.trees);
  flags["seed"] = std::to_string(spec.seed);
  flags["alpha-grid"] = a.alpha_grid.empty() ? "0:3:0.1" : a.alpha_grid;
  flags["out"] = a.out;
  write_manifest("bench-cv", flags, manifest_path(a.out));

  print_summaries(t);
  std::cout << "wrote " << a.out << ", " << summary_path(a.out) << ", " << manifest_path(a.out)
            << "\n";
  return 0;
}

struct VerifyArgs {
  int prop = 0;
  std::size_t n = 2000;
  int reps = 0;  // 0 picks the per-proposition default
  std::uint64_t seed = 0;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::theory;
  spec.prop = a.prop;
  spec.n = a.n;
  spec.seed = a.seed;
  if (a.reps > 0)
    spec.reps = a.reps;
  else
    spec.reps = a.prop == 3 ? 200000 : (a.prop == 4 ? 3 : 200);

  TheoryReport rep = run_theory(spec);
  for (const std::string& line : rep.lines) std::cout << line << "\n";
  if (!a.out.empty()) {
    std::ofstream outf(a.out, std::ios::binary);
    if (!outf) throw Error("cannot write results file: " + a.out);
    outf << rep.csv_header << '\n';
    for (const std::string& row : rep.csv_rows) outf << row << '\n';
    if (!outf) throw Error("failed writing results file: " + a.out);

    std::map<std::string, std::string> flags;
    flags["prop"] = std::to_string(a.prop);
    flags["n"] = std::to_string(spec.n);
    flags["reps"] = std::to_string(spec.reps);
    flags["seed"] = std::to_string(spec.seed);
    flags["out"] = a.out;
    write_manifest("verify", flags, manifest_path(a.out));
  }
  std::cout << (rep.pass ? "PASS" : "FAIL") << "\n";
  if (!rep.pass) {
    std::cerr << "error: verification failed for proposition " << a.prop << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha-trimmed random forests: fit, trim, predict, benchmark, verify"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset CSV");
  c_sim->add_option("--family", sim.family,
                    "constant, elbow, logistic, sine, or linear_snr")->required();
  c_sim->add_option("--n", sim.n, "number of rows");
  c_sim->add_option("--beta", sim.beta, "signal size (linear_snr slope)");
  c_sim->add_option("--sigma2", sim.sigma2, "noise variance (default per family)");
  c_sim->add_option("--seed", sim.seed, "rng seed")->required();
  c_sim->add_option("--out", sim.out, "output CSV path")->required();

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "fit a random forest and save the model");
  c_fit->add_option("--data", fit.data, "training CSV path")->required();
  c_fit->add_option("--target", fit.target, "target column name (default y)");
  c_fit->add_option("--trees", fit.trees, "number of trees (default 750)");
  c_fit->add_option("--mtry", fit.mtry, "features per split (default d/3)");
  c_fit->add_option("--min-node-size", fit.min_node_size,
                    "smallest node eligible for a split (default 3)");
  c_fit->add_option("--seed", fit.seed, "rng seed")->required();
  c_fit->add_option("--out", fit.out, "output model path")->required();

  TrimArgs trim;
  CLI::App* c_trim =
      app.add_subcommand("trim", "select alpha out of bag and store the trims in the model");
  c_trim->add_option("--model", trim.model, "input model path")->required();
  c_trim->add_option("--data", trim.data, "training CSV path (same rows the fit used)")
      ->required();
  c_trim->add_option("--target", trim.target, "target column name (default: the model's)");
  c_trim->add_option("--alpha-grid", trim.alpha_grid, "start:stop:step (default 0:3:0.1)");
  c_trim->add_option("--out", trim.out, "output model path")->required();

  PredictArgs pred;
  CLI::App* c_pred = app.add_subcommand("predict", "predict with a saved model");
  c_pred->add_option("--model", pred.model, "model path")->required();
  c_pred->add_option("--data", pred.data, "input CSV path (target column optional)")
      ->required();
  c_pred->add_option("--target", pred.target,
                     "target column to ignore if present (default: the model's)");
  c_pred->add_option("--out", pred.out, "output CSV path")->required();

  BenchSnrArgs snr;
  CLI::App* c_snr = app.add_subcommand(
      "bench-snr", "node-size sensitivity table on the signal-to-noise designs");
  c_snr->add_option("--family", snr.family, "linear_snr or elbow")->required();
  c_snr->add_option("--beta", snr.beta, "linear_snr slope (default 0)");
  c_snr->add_option("--n", snr.n, "training rows per replicate (default 500)");
  c_snr->add_option("--trees", snr.trees, "trees per forest (default 100)");
  c_snr->add_option("--reps", snr.reps, "replicates (default 10)");
  c_snr->add_option("--nmin-grid", snr.nmin_grid, "comma list of fixed node sizes");
  c_snr->add_option("--alpha-grid", snr.alpha_grid, "start:stop:step (default 0:3:0.1)");
  c_snr->add_option("--seed", snr.seed, "rng seed")->required();
  c_snr->add_option("--out", snr.out, "output CSV path")->required();

  BenchCvArgs cv;
  CLI::App* c_cv = app.add_subcommand(
      "bench-cv", "cross-validated comparison on a CSV or synthetic dataset");
  c_cv->add_option("--data", cv.data, "dataset CSV path");
  c_cv->add_option("--target", cv.target, "target column name (default y)");
  c_cv->add_option("--family", cv.family, "synthetic family instead of --data");
  c_cv->add_option("--n", cv.n, "synthetic rows (default 1000)");
  c_cv->add_option("--beta", cv.beta, "linear_snr slope (default 1)");
  c_cv->add_option("--folds", cv.folds, "cross-validation folds (default 6)");
  c_cv->add_option("--reps", cv.reps, "bootstrap replicates (default 10)");
  c_cv->add_option("--trees", cv.trees, "trees per forest (default 100)");
  c_cv->add_option("--alpha-grid", cv.alpha_grid, "start:stop:step (default 0:3:0.1)");
  c_cv->add_option("--seed", cv.seed, "rng seed")->required();
  c_cv->add_option("--out", cv.out, "output CSV path")->required();

  VerifyArgs ver;
  CLI::App* c_ver = app.add_subcommand("verify", "check one proposition and print PASS/FAIL");
  c_ver->add_option("--prop", ver.prop, "proposition number, 1 to 4")->required();
  c_ver->add_option("--n", ver.n, "sample size for props 1 and 2 (default 2000)");
  c_ver->add_option("--reps", ver.reps, "replicates (default per proposition)");
  c_ver->add_option("--seed", ver.seed, "rng seed")->required();
  c_ver->add_option("--out", ver.out, "optional results CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c_sim->parsed()) {
      sim.beta_set = c_sim->count("--beta") > 0;
      sim.sigma2_set = c_sim->count("--sigma2") > 0;
      return run_simulate(sim);
    }
    if (c_fit->parsed()) return run_fit(fit);
    if (c_trim->parsed()) return run_trim(trim);
    if (c_pred->parsed()) return run_predict(pred);
    if (c_snr->parsed()) return run_bench_snr(snr);
    if (c_cv->parsed()) return run_bench_cv(cv);
    if (c_ver->parsed()) return run_verify(ver);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
