#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trimforest/common.hpp"
#include "trimforest/rng.hpp"

namespace trimforest {

// ============================================================================
// dataset
// ============================================================================

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;  // row-major, n * d
  std::vector<double> y;  // n
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  const double* row(std::size_t i) const { return x.data() + i * d; }
  double at(std::size_t i, std::size_t j) const { return x[i * d + j]; }
};

inline void check_dataset(const Dataset& ds) {
  if (ds.n < 1) throw Error("dataset has no rows");
  if (ds.d < 1) throw Error("dataset has no feature columns");
  if (ds.x.size() != ds.n * ds.d || ds.y.size() != ds.n)
    throw Error("dataset buffers do not match n and d");
  if (ds.feature_names.size() != ds.d)
    throw Error("dataset has " + std::to_string(ds.feature_names.size()) +
                " feature names for d = " + std::to_string(ds.d));
  for (double v : ds.x)
    if (!std::isfinite(v)) throw Error("dataset holds a non-finite feature value");
  for (double v : ds.y)
    if (!std::isfinite(v)) throw Error("dataset holds a non-finite response value");
}

// New dataset holding the given rows (duplicates allowed), same columns.
inline Dataset take_rows(const Dataset& ds, const std::vector<std::int32_t>& rows) {
  Dataset out;
  out.n = rows.size();
  out.d = ds.d;
  out.feature_names = ds.feature_names;
  out.target_name = ds.target_name;
  out.x.reserve(out.n * out.d);
  out.y.reserve(out.n);
  for (std::int32_t r : rows) {
    const double* src = ds.row(static_cast<std::size_t>(r));
    out.x.insert(out.x.end(), src, src + ds.d);
    out.y.push_back(ds.y[static_cast<std::size_t>(r)]);
  }
  return out;
}

// ============================================================================
// CSV import / export
// ============================================================================

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

// Header row of column names, then one decimal-point real per cell. Every
// parse failure reports the file, line, and column it came from.
inline Dataset load_csv(const std::string& path, const std::string& target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open data file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty data file: " + path);

  std::vector<std::string> header = detail::split_fields(line);
  std::size_t target_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == target) target_col = c;
  if (target_col == header.size())
    throw Error("target column '" + target + "' not found in " + path);
  if (header.size() < 2) throw Error("no feature columns in " + path);

  Dataset ds;
  ds.d = header.size() - 1;
  ds.target_name = target;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_col) ds.feature_names.push_back(header[c]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_fields(line);
    if (cells.size() != header.size())
      throw Error(path + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(header.size()) + " columns, got " +
                  std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::optional<double> v = parse_real(cells[c]);
      if (!v)
        throw Error(path + ":" + std::to_string(line_no) + ": column '" +
                    header[c] + "': not a finite real: '" + cells[c] + "'");
      if (c == target_col)
        ds.y.push_back(*v);
      else
        ds.x.push_back(*v);
    }
    ++ds.n;
  }
  if (ds.n == 0) throw Error("no data rows in " + path);
  check_dataset(ds);
  return ds;
}

// Loads every column as a feature, except an optional named column to drop
// (a target column that may or may not be present). y stays empty.
inline Dataset load_feature_csv(const std::string& path, const std::string& drop_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open data file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty data file: " + path);

  std::vector<std::string> header = detail::split_fields(line);
  std::size_t drop_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == drop_column) drop_col = c;
  const std::size_t n_feats = header.size() - (drop_col < header.size() ? 1 : 0);
  if (n_feats == 0) throw Error("no feature columns in " + path);

  Dataset ds;
  ds.d = n_feats;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != drop_col) ds.feature_names.push_back(header[c]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_fields(line);
    if (cells.size() != header.size())
      throw Error(path + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(header.size()) + " columns, got " +
                  std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == drop_col) continue;
      std::optional<double> v = parse_real(cells[c]);
      if (!v)
        throw Error(path + ":" + std::to_string(line_no) + ": column '" +
                    header[c] + "': not a finite real: '" + cells[c] + "'");
      ds.x.push_back(*v);
    }
    ++ds.n;
  }
  if (ds.n == 0) throw Error("no data rows in " + path);
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write data file: " + path);
  for (std::size_t j = 0; j < ds.d; ++j) out << ds.feature_names[j] << ',';
  out << ds.target_name << '\n';
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) out << real_to_string(ds.at(i, j)) << ',';
    out << real_to_string(ds.y[i]) << '\n';
  }
  if (!out) throw Error("failed writing data file: " + path);
}

// ============================================================================
// synthetic generators
// ============================================================================

enum class Family { constant, elbow, logistic, sine, linear_snr };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::constant: return "constant";
    case Family::elbow: return "elbow";
    case Family::logistic: return "logistic";
    case Family::sine: return "sine";
    case Family::linear_snr: return "linear_snr";
  }
  return "?";
}

inline std::optional<Family> family_from_name(std::string_view name) {
  if (name == "constant") return Family::constant;
  if (name == "elbow") return Family::elbow;
  if (name == "logistic") return Family::logistic;
  if (name == "sine") return Family::sine;
  if (name == "linear_snr") return Family::linear_snr;
  return std::nullopt;
}

inline std::size_t family_dim(Family f) { return f == Family::linear_snr ? 5 : 1; }

inline double family_default_sigma2(Family f) {
  switch (f) {
    case Family::constant: return 1.0 / 1000.0;
    case Family::elbow: return 1.0 / 1000.0;
    case Family::logistic: return 0.005;
    case Family::sine: return 0.05;
    case Family::linear_snr: return 1.0;
  }
  return 1.0;
}

inline bool family_default_normalize(Family f) { return f != Family::linear_snr; }

struct SyntheticSpec {
  Family family = Family::constant;
  std::size_t n = 1000;
  double beta = 1.0;    // linear_snr slope; ignored elsewhere
  double sigma2 = 1.0 / 1000.0;
  bool normalize = true;
  std::uint64_t seed = 0;
};

inline SyntheticSpec default_spec(Family f, std::size_t n, std::uint64_t seed) {
  SyntheticSpec s;
  s.family = f;
  s.n = n;
  s.sigma2 = family_default_sigma2(f);
  s.normalize = family_default_normalize(f);
  s.seed = seed;
  return s;
}

// Features are uniform on [0,1]^d; the response is the family mean plus
// Gaussian noise. Draw order is fixed: per row, features first, then the
// noise deviate. Normalization centers and scales the response once, with
// the population divisor, before anything is split off.
inline Dataset generate(const SyntheticSpec& spec) {
  if (spec.n < 1) throw Error("synthetic spec: n must be at least 1");
  if (!(spec.sigma2 > 0)) throw Error("synthetic spec: sigma2 must be positive");
  const std::size_t d = family_dim(spec.family);
  const double sigma = std::sqrt(spec.sigma2);
  Rng rng(spec.seed);

  Dataset ds;
  ds.n = spec.n;
  ds.d = d;
  ds.x.resize(ds.n * d);
  ds.y.resize(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    double* row = ds.x.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = rng.uniform01();
    double mu = 0.0;
    switch (spec.family) {
      case Family::constant:
        mu = 0.0;
        break;
      case Family::elbow:
        mu = row[0] < 0.5 ? 0.0 : row[0] - 0.5;
        break;
      case Family::logistic:
        mu = 1.0 / (1.0 + std::exp(15.0 - 30.0 * row[0]));
        break;
      case Family::sine:
        mu = std::sin(kTwoPi * row[0]);
        break;
      case Family::linear_snr: {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += row[j];
        mu = spec.beta * s;
        break;
      }
    }
    ds.y[i] = mu + sigma * rng.normal();
  }

  if (spec.normalize) {
    double mean = 0.0;
    for (double v : ds.y) mean += v;
    mean /= double(ds.n);
    double var = 0.0;
    for (double& v : ds.y) {
      v -= mean;
      var += v * v;
    }
    var /= double(ds.n);
    if (!(var > 0)) throw Error("cannot normalize a zero-variance response");
    double sd = std::sqrt(var);
    for (double& v : ds.y) v /= sd;
  }

  ds.feature_names.resize(d);
  for (std::size_t j = 0; j < d; ++j) ds.feature_names[j] = "x" + std::to_string(j + 1);
  ds.target_name = "y";
  return ds;
}

// ============================================================================
// resampling
// ============================================================================

struct BootstrapSample {
  std::vector<std::int32_t> rows;  // sorted index multiset of size n
  std::vector<std::uint8_t> oob;   // 1 where the row never appears above
};

inline BootstrapSample bootstrap_sample(const Dataset& ds, std::uint64_t seed) {
  if (ds.n < 1) throw Error("bootstrap needs a nonempty dataset");
  Rng rng(seed);
  BootstrapSample s;
  s.rows.resize(ds.n);
  s.oob.assign(ds.n, 1);
  for (std::size_t i = 0; i < ds.n; ++i) {
    auto r = static_cast<std::int32_t>(rng.below(ds.n));
    s.rows[i] = r;
    s.oob[static_cast<std::size_t>(r)] = 0;
  }
  std::sort(s.rows.begin(), s.rows.end());
  return s;
}

struct FoldPlan {
  std::int32_t k = 0;
  std::vector<std::int32_t> assignment;  // fold id per row, in [0, k)
};

// Random balanced folds: sizes differ by at most one.
inline FoldPlan kfold(std::size_t n, std::int32_t k, std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be at least 2");
  if (static_cast<std::size_t>(k) > n) throw Error("kfold: k exceeds the number of rows");
  Rng rng(seed);
  std::vector<std::int32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = rng.below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  FoldPlan plan;
  plan.k = k;
  plan.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    plan.assignment[static_cast<std::size_t>(perm[i])] = static_cast<std::int32_t>(i % k);
  return plan;
}

}  // namespace trimforest
