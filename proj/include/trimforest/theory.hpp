#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "trimforest/trim.hpp"

namespace trimforest {

// ============================================================================
// model selection criteria
// ============================================================================

namespace detail {

inline double sse_around_mean(const std::vector<double>& y) {
  double s1 = 0.0, s2 = 0.0;
  for (double v : y) {
    s1 += v;
    s2 += v * v;
  }
  double sse = s2 - s1 * s1 / double(y.size());
  return sse < 0 ? 0 : sse;
}

struct TwoSegment {
  double sse = std::numeric_limits<double>::infinity();
  std::int32_t feature = -1;
  std::int64_t n_left = 0;
};

// Exhaustive best axis-aligned two-segment fit: every feature, every
// boundary position 1..n-1 after sorting by (coordinate, index). Ties go to
// the lowest feature, then the smallest left-segment size.
inline TwoSegment best_two_segment(const std::vector<double>& x, std::size_t d,
                                   const std::vector<double>& y) {
  const std::size_t n = y.size();
  TwoSegment best;
  std::vector<std::pair<double, std::int32_t>> vals(n);
  double tot1 = 0.0, tot2 = 0.0;
  for (double v : y) {
    tot1 += v;
    tot2 += v * v;
  }
  for (std::size_t f = 0; f < d; ++f) {
    for (std::size_t i = 0; i < n; ++i)
      vals[i] = {x[i * d + f], static_cast<std::int32_t>(i)};
    std::sort(vals.begin(), vals.end());
    double run1 = 0.0, run2 = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      double v = y[static_cast<std::size_t>(vals[i - 1].second)];
      run1 += v;
      run2 += v * v;
      double sl = run2 - run1 * run1 / double(i);
      if (sl < 0) sl = 0;
      double rest1 = tot1 - run1, rest2 = tot2 - run2;
      double sr = rest2 - rest1 * rest1 / double(n - i);
      if (sr < 0) sr = 0;
      double t = sl + sr;
      if (t < best.sse) {
        best.sse = t;
        best.feature = static_cast<std::int32_t>(f);
        best.n_left = static_cast<std::int64_t>(i);
      }
    }
  }
  return best;
}

}  // namespace detail

// Criterion for the single-mean model. With a known variance the residual
// term is the squared error over sigma2 and the penalty is ln n; with the
// variance estimated by maximum likelihood the residual collapses to n and
// the penalty grows to 2 ln n.
inline double bic0(const std::vector<double>& y, std::optional<double> sigma2 = {}) {
  const std::size_t n = y.size();
  if (n < 1) throw Error("bic0 needs at least one observation");
  double sse = detail::sse_around_mean(y);
  if (sigma2) {
    if (!(*sigma2 > 0)) throw Error("sigma2 must be positive");
    return double(n) * std::log(kTwoPi * *sigma2) + sse / *sigma2 + std::log(double(n));
  }
  double v = sse / double(n);
  if (v < kVarianceFloor)
    throw Error("response variance below 1e-15; bic0 needs a known sigma2 here");
  return double(n) * std::log(kTwoPi * v) + double(n) + 2.0 * std::log(double(n));
}

struct Bic1Result {
  double value = 0.0;
  std::int32_t feature = -1;
  std::int64_t n_left = 0;
};

// Criterion for the best single-split model, minimizing the two-segment
// squared error exhaustively over features and boundary positions. Known
// variance carries a 4 ln n penalty; the estimated-variance form uses the
// minimized squared error over n and carries 5 ln n.
inline Bic1Result bic1(const std::vector<double>& x, std::size_t d,
                       const std::vector<double>& y, std::optional<double> sigma2 = {}) {
  const std::size_t n = y.size();
  if (n < 2) throw Error("bic1 needs at least two observations");
  if (d < 1 || x.size() != n * d) throw Error("bic1 feature matrix does not match n and d");
  detail::TwoSegment seg = detail::best_two_segment(x, d, y);
  Bic1Result res;
  res.feature = seg.feature;
  res.n_left = seg.n_left;
  if (sigma2) {
    if (!(*sigma2 > 0)) throw Error("sigma2 must be positive");
    res.value = double(n) * std::log(kTwoPi * *sigma2) + seg.sse / *sigma2 +
                4.0 * std::log(double(n));
  } else {
    double v = seg.sse / double(n);
    if (v < kVarianceFloor)
      throw Error("split residual variance below 1e-15; bic1 needs a known sigma2 here");
    res.value = double(n) * std::log(kTwoPi * v) + double(n) + 5.0 * std::log(double(n));
  }
  return res;
}

// ============================================================================
// consistency simulation
// ============================================================================

// Data-generating truth: a flat mean mu1, or a one-split step from mu1 to
// mu2 at the threshold on one feature.
struct McTruth {
  bool stump = false;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma2 = 1.0;
  std::int32_t feature = 0;
  double threshold = 0.5;
};

// Fraction of replicates on which the true model's criterion is strictly
// smaller. Both criteria are evaluated in their estimated-variance forms
// with the variance taken from the fitted stump, which is consistent under
// either truth.
inline double mc_consistency(const McTruth& truth, std::size_t n, std::size_t d, int reps,
                             std::uint64_t seed) {
  if (n < 2) throw Error("mc_consistency needs n >= 2");
  if (d < 1) throw Error("mc_consistency needs d >= 1");
  if (reps < 1) throw Error("mc_consistency needs reps >= 1");
  if (!(truth.sigma2 > 0)) throw Error("mc_consistency needs sigma2 > 0");
  if (truth.stump && (truth.feature < 0 || static_cast<std::size_t>(truth.feature) >= d))
    throw Error("mc_consistency stump feature out of range");

  const double sigma = std::sqrt(truth.sigma2);
  std::vector<double> x(n * d), y(n);
  int wins = 0;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = rng.uniform01();
      double mu = truth.mu1;
      if (truth.stump && x[i * d + static_cast<std::size_t>(truth.feature)] >= truth.threshold)
        mu = truth.mu2;
      y[i] = mu + sigma * rng.normal();
    }
    double sse0 = detail::sse_around_mean(y);
    detail::TwoSegment seg = detail::best_two_segment(x, d, y);
    double v = seg.sse / double(n);
    if (v < kVarianceFloor)
      throw Error("mc_consistency replicate produced a near-zero stump variance");
    double b0 = double(n) * std::log(kTwoPi * v) + sse0 / v + 2.0 * std::log(double(n));
    double b1 = double(n) * std::log(kTwoPi * v) + double(n) + 5.0 * std::log(double(n));
    wins += truth.stump ? (b1 < b0) : (b0 < b1);
  }
  return double(wins) / double(reps);
}

// ============================================================================
// cell-mean risk
// ============================================================================

// Expected squared prediction error of the cell-mean estimator on a linear
// response over k cells with m points per cell.
inline double mspe_closed_form(int m, int k, double beta, double sigma2) {
  if (m < 1 || k < 1) throw Error("mspe needs m >= 1 and k >= 1");
  if (!(sigma2 > 0)) throw Error("mspe needs sigma2 > 0");
  double kk = double(k);
  return sigma2 / double(m) + (1.0 + 1.0 / double(m)) * beta * beta / (12.0 * kk * kk);
}

struct MspeEstimate {
  double mean = 0.0;
  double se = 0.0;
};

// Direct simulation of the same design: each cell j of [0,1] receives m
// uniform points, responses are beta*x plus Gaussian noise, and the test
// point falls uniformly in the first cell, predicted by that cell's mean.
inline MspeEstimate mspe_simulate(int m, int k, double beta, double sigma2, int reps,
                                  std::uint64_t seed) {
  if (m < 1 || k < 1) throw Error("mspe needs m >= 1 and k >= 1");
  if (!(sigma2 > 0)) throw Error("mspe needs sigma2 > 0");
  if (reps < 2) throw Error("mspe_simulate needs reps >= 2");
  const double sigma = std::sqrt(sigma2);
  double sum = 0.0, sum2 = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
    double mean0 = 0.0;
    for (int cell = 0; cell < k; ++cell) {
      double cell_sum = 0.0;
      for (int i = 0; i < m; ++i) {
        double x = (double(cell) + rng.uniform01()) / double(k);
        cell_sum += beta * x + sigma * rng.normal();
      }
      if (cell == 0) mean0 = cell_sum / double(m);
    }
    double xs = rng.uniform01() / double(k);
    double err = mean0 - beta * xs;
    sum += err * err;
    sum2 += err * err * err * err;
  }
  MspeEstimate est;
  est.mean = sum / double(reps);
  double var = (sum2 - sum * sum / double(reps)) / double(reps - 1);
  if (var < 0) var = 0;
  est.se = std::sqrt(var / double(reps));
  return est;
}

// Unique positive root of (1/(gamma^2)) k^3 - k/12 - n/6 = 0, the first-order
// condition for the cell count minimizing the closed-form risk at budget n.
// Bisection runs to adjacent doubles, far inside 1e-10 relative.
inline double optimal_k(double gamma, double n) {
  if (!(gamma > 0)) throw Error("optimal_k needs gamma > 0");
  if (!(n > 0)) throw Error("optimal_k needs n > 0");
  const double g2 = gamma * gamma;
  auto f = [&](double k) { return k * k * k / g2 - k / 12.0 - n / 6.0; };
  double hi = std::cbrt(g2 * n / 6.0) + 1.0;
  while (f(hi) <= 0) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = lo + (hi - lo) / 2.0;
    if (mid == lo || mid == hi) break;
    if (f(mid) < 0)
      lo = mid;
    else
      hi = mid;
  }
  return lo + (hi - lo) / 2.0;
}

// Large-n scale of the optimal cell count.
inline double optimal_k_asymptote(double gamma, double n) {
  return std::cbrt(gamma * gamma * n / 6.0);
}

// ============================================================================
// cost measurement
// ============================================================================

struct ComplexityRow {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t splits = 0;  // internal nodes of the measured tree
  double fit_ms = 0.0;
  double prune_ms = 0.0;
  double oob_ms = 0.0;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace detail

// Grows fully deep trees on synthetic data over a grid of sample sizes and
// times the fit, prune, and out-of-bag passes. Prune and out-of-bag calls
// are repeated in a fixed-size inner loop and averaged, and the per-size
// result is the median over repetitions. Timings vary run to run; only the
// structural columns (n, d, splits) are deterministic.
inline std::vector<ComplexityRow> complexity_bench(const std::vector<std::size_t>& ns,
                                                   std::size_t d, int trees, int repetitions,
                                                   std::uint64_t seed) {
  if (d < 1) throw Error("complexity_bench needs d >= 1");
  if (trees < 1 || repetitions < 1)
    throw Error("complexity_bench needs trees >= 1 and repetitions >= 1");
  std::vector<ComplexityRow> rows;
  for (std::size_t n : ns) {
    if (n < 4) throw Error("complexity_bench needs n >= 4");
    Rng rng(derive_seed(seed, n));
    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.x.resize(n * d);
    ds.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        ds.x[i * d + j] = rng.uniform01();
        s += ds.x[i * d + j];
      }
      ds.y[i] = s + rng.normal();
    }
    ds.feature_names.resize(d);
    for (std::size_t j = 0; j < d; ++j) ds.feature_names[j] = "x" + std::to_string(j + 1);

    const int inner = std::max(1, int(2000000 / n));
    std::vector<double> fit_ms, prune_ms, oob_ms;
    Tree tree;
    std::vector<std::uint8_t> mask;
    for (int rep = 0; rep < repetitions; ++rep) {
      std::uint64_t rep_seed = derive_seed(seed, 1000003 * (rep + 1) + n);
      BootstrapSample boot = bootstrap_sample(ds, rep_seed);
      TreeConfig tc{3, static_cast<std::int32_t>(d), derive_seed(rep_seed, 1)};

      auto t0 = std::chrono::steady_clock::now();
      for (int b = 0; b < trees; ++b) {
        tc.seed = derive_seed(rep_seed, static_cast<std::uint64_t>(2 + b));
        tree = fit_tree(ds, boot.rows, tc);
      }
      fit_ms.push_back(detail::elapsed_ms(t0) / trees);

      t0 = std::chrono::steady_clock::now();
      for (int it = 0; it < inner; ++it) mask = prune(tree, 1.0).merged;
      prune_ms.push_back(detail::elapsed_ms(t0) / inner);

      t0 = std::chrono::steady_clock::now();
      double sink = 0.0;
      for (int it = 0; it < inner; ++it)
        for (std::size_t i = 0; i < n; ++i)
          if (boot.oob[i]) sink += predict_tree(tree, ds.row(i));
      volatile double keep = sink;
      (void)keep;
      oob_ms.push_back(detail::elapsed_ms(t0) / inner);
    }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      std::size_t h = v.size() / 2;
      return v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2;
    };
    ComplexityRow row;
    row.n = n;
    row.d = d;
    row.splits = tree.split_count();
    row.fit_ms = median(fit_ms);
    row.prune_ms = median(prune_ms);
    row.oob_ms = median(oob_ms);
    rows.push_back(row);
  }
  return rows;
}

// Least-squares slope of ln(value) against ln(n).
inline double loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw Error("loglog_slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : points) {
    if (!(x > 0) || !(y > 0)) throw Error("loglog_slope needs positive values");
    double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double m = double(points.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace trimforest
