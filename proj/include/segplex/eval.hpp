#pragma once

// Evaluation protocol: rank and product-moment correlation, seeded repeated
// k-fold cross-validation, binned rating statistics, and the regression of
// prediction error on patch symmetry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segplex/dataset.hpp"
#include "segplex/error.hpp"
#include "segplex/features.hpp"
#include "segplex/regress.hpp"

namespace segplex {

// ---------------------------------------------------------------------------
// Correlation

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw config_error("correlation inputs differ in length (" + std::to_string(x.size()) + " vs " +
                       std::to_string(y.size()) + ")");
  if (x.size() < 3) throw config_error("correlation needs at least 3 points");
}

}  // namespace detail

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw config_error("non-finite correlation input");
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw undefined_correlation_error("correlation is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Seeded folds
//
// The shuffle for (seed, repeat) uses std::mt19937_64 seeded with
// splitmix64(seed ^ splitmix64(repeat)), a Fisher-Yates pass from the back,
// and rejection sampling for bounded draws. All three are fully specified, so
// assignments are identical across platforms and standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 repeat_engine(std::uint64_t seed, std::uint64_t repeat_index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(repeat_index)));
}

// Uniform in [0, bound).
inline std::uint64_t uniform_below(std::mt19937_64& eng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = eng();
    if (r >= threshold) return r % bound;
  }
}

struct FoldAssignment {
  std::uint64_t seed = 0;
  std::uint64_t repeat_index = 0;
  std::size_t k = 0;
  std::vector<std::string> ids;  // sorted
  std::vector<std::size_t> fold;  // fold index per id

  std::vector<std::string> members(std::size_t f) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (fold[i] == f) out.push_back(ids[i]);
    return out;
  }

  std::size_t fold_of(const std::string& id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) throw config_error("id '" + id + "' is not part of the fold assignment");
    return fold[static_cast<std::size_t>(it - ids.begin())];
  }
};

// Shuffles the sorted ids and deals them round-robin, so fold sizes differ by at most one.
inline FoldAssignment kfold_splits(std::vector<std::string> ids, std::size_t k, std::uint64_t seed,
                                   std::uint64_t repeat_index) {
  if (k < 2) throw config_error("k must be at least 2");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw config_error("fold ids must be unique");
  if (k > ids.size())
    throw config_error("k = " + std::to_string(k) + " exceeds the number of ids (" + std::to_string(ids.size()) + ")");

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto eng = repeat_engine(seed, repeat_index);
  for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[uniform_below(eng, i + 1)]);

  FoldAssignment fa;
  fa.seed = seed;
  fa.repeat_index = repeat_index;
  fa.k = k;
  fa.fold.assign(ids.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) fa.fold[order[pos]] = pos % k;
  fa.ids = std::move(ids);
  return fa;
}

struct RepeatSchedule {
  double numerator = 1500.0;
  std::size_t min_repeats = 1;
  std::size_t max_repeats = 30;
};

// More repeats for smaller sets: clamp(round(numerator / n), min, max).
inline std::size_t repeats_for(std::size_t n, const RepeatSchedule& s = {}) {
  if (n == 0) throw config_error("empty image-set");
  const auto m = static_cast<std::size_t>(std::llround(s.numerator / static_cast<double>(n)));
  return std::clamp(m, s.min_repeats, s.max_repeats);
}

// ---------------------------------------------------------------------------
// Cross-validation

enum class CvMode {
  per_fold,  // mean of per-fold test correlations
  pooled,    // per repeat, correlate all out-of-fold predictions; mean over repeats
};

inline std::string to_string(CvMode m) { return m == CvMode::pooled ? "pooled" : "per_fold"; }

struct CvOptions {
  std::size_t k = 3;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  CvMode mode = CvMode::per_fold;
};

struct FoldResult {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<double> spearman;
  std::string excluded_reason;  // non-empty iff spearman is absent
};

struct OutOfFoldPrediction {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::string image_id;
  double rating = 0.0;
  double prediction = 0.0;
};

struct CvReport {
  std::string image_set;
  std::vector<std::string> model_spec;
  CvOptions options;
  std::size_t n = 0;
  std::vector<FoldResult> folds;
  std::vector<std::optional<double>> repeat_spearman;  // pooled mode only
  std::vector<OutOfFoldPrediction> predictions;
  std::optional<double> mean_spearman;  // absent when every fold was excluded
  std::size_t excluded = 0;
  std::vector<std::string> warnings;
};

inline CvReport cross_validate(const ImageSet& set, const std::vector<std::string>& model_spec,
                               const CvOptions& options) {
  if (model_spec.empty()) throw config_error("model spec must name at least one regressor");
  for (const auto& label : model_spec)
    if (!is_known_regressor(label)) throw config_error("unknown regressor '" + label + "'");
  if (options.repeats < 1) throw config_error("repeats must be at least 1");
  const std::size_t n = set.rows.size();
  const std::size_t needed = options.k * (model_spec.size() + 2);
  if (n < needed)
    throw config_error("image-set '" + set.name + "' has " + std::to_string(n) + " rows; at least " +
                       std::to_string(needed) + " are needed for " + std::to_string(options.k) + "-fold CV");

  std::vector<FeatureVector> features;
  std::vector<double> ratings;
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < n; ++i) {
    features.push_back(set.rows[i].features);
    ratings.push_back(set.rows[i].rating);
    ids.push_back(set.rows[i].image_id);
    if (!row_of.emplace(set.rows[i].image_id, i).second)
      throw input_error("duplicate image_id '" + set.rows[i].image_id + "' in image-set '" + set.name + "'");
  }
  const auto design = design_from_features(features, model_spec);

  CvReport report;
  report.image_set = set.name;
  report.model_spec = model_spec;
  report.options = options;
  report.n = n;

  auto take_rows = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (auto r : rows) {
      std::vector<double> v;
      for (std::size_t j = 1; j < design.cols(); ++j) v.push_back(design.at(r, j));
      x.push_back(std::move(v));
      y.push_back(ratings[r]);
    }
    return std::pair{DesignMatrix(model_spec, x), y};
  };

  for (std::size_t rep = 0; rep < options.repeats; ++rep) {
    const auto assignment = kfold_splits(ids, options.k, options.seed, rep);
    std::vector<double> pooled_pred, pooled_true;
    bool repeat_broken = false;
    for (std::size_t f = 0; f < options.k; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < assignment.ids.size(); ++i)
        (assignment.fold[i] == f ? test : train).push_back(row_of.at(assignment.ids[i]));

      FoldResult fr;
      fr.repeat = rep;
      fr.fold = f;
      fr.n_train = train.size();
      fr.n_test = test.size();
      try {
        auto [x_train, y_train] = take_rows(train);
        const auto model = fit_ols(x_train, y_train);
        std::vector<double> pred, truth;
        for (auto r : test) {
          std::vector<double> v;
          for (std::size_t j = 1; j < design.cols(); ++j) v.push_back(design.at(r, j));
          pred.push_back(predict(model, v));
          truth.push_back(ratings[r]);
          report.predictions.push_back({rep, f, ids[r], ratings[r], pred.back()});
        }
        pooled_pred.insert(pooled_pred.end(), pred.begin(), pred.end());
        pooled_true.insert(pooled_true.end(), truth.begin(), truth.end());
        if (options.mode == CvMode::per_fold) fr.spearman = spearman(pred, truth);
      } catch (const rank_deficient_error& e) {
        fr.excluded_reason = e.what();
        repeat_broken = true;
      } catch (const undefined_correlation_error& e) {
        fr.excluded_reason = e.what();
      }
      if (!fr.excluded_reason.empty()) {
        ++report.excluded;
        report.warnings.push_back("repeat " + std::to_string(rep) + " fold " + std::to_string(f) +
                                  " excluded: " + fr.excluded_reason);
      }
      report.folds.push_back(std::move(fr));
    }
    if (options.mode == CvMode::pooled) {
      std::optional<double> value;
      if (repeat_broken) {
        report.warnings.push_back("repeat " + std::to_string(rep) + " excluded: a training fold was rank-deficient");
      } else {
        try {
          value = spearman(pooled_pred, pooled_true);
        } catch (const undefined_correlation_error& e) {
          report.warnings.push_back("repeat " + std::to_string(rep) + " excluded: " + e.what());
        }
      }
      report.repeat_spearman.push_back(value);
    }
  }

  double sum = 0.0;
  std::size_t count = 0;
  if (options.mode == CvMode::per_fold) {
    for (const auto& fr : report.folds)
      if (fr.spearman) sum += *fr.spearman, ++count;
  } else {
    for (const auto& v : report.repeat_spearman)
      if (v) sum += *v, ++count;
  }
  if (count > 0) report.mean_spearman = sum / static_cast<double>(count);
  return report;
}

// ---------------------------------------------------------------------------
// Binned statistics

struct BinCell {
  std::size_t count = 0;
  std::optional<double> mean;  // absent for empty cells
  std::optional<double> std;   // population standard deviation
};

struct BinGrid {
  std::vector<double> x_edges;  // sqrt_num_seg axis, bins + 1 entries
  std::vector<double> y_edges;  // sqrt_num_class axis
  std::vector<BinCell> cells;   // x-major: cells[ix * y_bins + iy]
  std::vector<std::string> warnings;

  std::size_t x_bins() const noexcept { return x_edges.size() - 1; }
  std::size_t y_bins() const noexcept { return y_edges.size() - 1; }
  const BinCell& cell(std::size_t ix, std::size_t iy) const { return cells[ix * y_bins() + iy]; }
};

namespace detail {

struct Axis {
  std::vector<double> edges;
  double min = 0.0, width = 0.0;
  std::size_t bins = 1;

  std::size_t index(double v) const {
    if (bins == 1) return 0;
    auto b = static_cast<std::size_t>(std::floor((v - min) / width));
    return std::min(b, bins - 1);
  }
};

inline Axis make_axis(std::span<const double> v, std::size_t bins, const char* name, std::vector<std::string>& warn) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  Axis a;
  a.min = *lo;
  if (!(*hi > *lo)) {
    warn.push_back(std::string(name) + " axis is degenerate (all values " + csv::format_double(*lo) +
                   "); using a single bin");
    a.edges = {*lo, *hi};
    return a;
  }
  a.bins = bins;
  a.width = (*hi - *lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) a.edges.push_back(i == bins ? *hi : *lo + a.width * static_cast<double>(i));
  return a;
}

}  // namespace detail

// Equal-width bins spanning [min, max] per axis; the maximum falls in the last bin.
inline BinGrid binned_stats(std::span<const double> x, std::span<const double> y, std::span<const double> ratings,
                            std::size_t bins_per_axis) {
  if (bins_per_axis < 2) throw config_error("bins_per_axis must be at least 2");
  if (x.empty()) throw config_error("binned_stats needs at least one point");
  if (x.size() != y.size() || x.size() != ratings.size()) throw config_error("binned_stats inputs differ in length");

  BinGrid grid;
  const auto ax = detail::make_axis(x, bins_per_axis, kSqrtNumSeg.data(), grid.warnings);
  const auto ay = detail::make_axis(y, bins_per_axis, kSqrtNumClass.data(), grid.warnings);
  grid.x_edges = ax.edges;
  grid.y_edges = ay.edges;

  std::vector<std::vector<double>> members(ax.bins * ay.bins);
  for (std::size_t i = 0; i < x.size(); ++i) members[ax.index(x[i]) * ay.bins + ay.index(y[i])].push_back(ratings[i]);
  grid.cells.resize(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& m = members[c];
    auto& cell = grid.cells[c];
    cell.count = m.size();
    if (m.empty()) continue;
    double mean = 0.0;
    for (double v : m) mean += v;
    mean /= static_cast<double>(m.size());
    double ss = 0.0;
    for (double v : m) ss += (v - mean) * (v - mean);
    cell.mean = mean;
    cell.std = std::sqrt(ss / static_cast<double>(m.size()));
  }
  return grid;
}

inline BinGrid binned_stats(std::span<const FeatureVector> features, std::span<const double> ratings,
                            std::size_t bins_per_axis) {
  std::vector<double> x, y;
  for (const auto& fv : features) {
    x.push_back(fv.sqrt_num_seg);
    y.push_back(fv.sqrt_num_class);
  }
  return binned_stats(x, y, ratings, bins_per_axis);
}

// ---------------------------------------------------------------------------
// Error versus symmetry

struct ErrorSymmetryFit {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 0.0;
  std::size_t n = 0;
};

// Simple regression of (prediction - ground truth) on patch symmetry.
inline ErrorSymmetryFit error_vs_symmetry(std::span<const double> predictions, std::span<const double> ground_truth,
                                          std::span<const double> patch_symm) {
  if (predictions.size() != ground_truth.size() || predictions.size() != patch_symm.size())
    throw config_error("error_vs_symmetry inputs differ in length");
  if (predictions.size() < 3) throw config_error("error_vs_symmetry needs at least 3 points");
  std::vector<double> err(predictions.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = predictions[i] - ground_truth[i];

  const double n = static_cast<double>(err.size());
  const double ms = std::accumulate(patch_symm.begin(), patch_symm.end(), 0.0) / n;
  const double me = std::accumulate(err.begin(), err.end(), 0.0) / n;
  double sss = 0.0, sse = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    sss += (patch_symm[i] - ms) * (patch_symm[i] - ms);
    sse += (patch_symm[i] - ms) * (err[i] - me);
  }
  if (sss == 0.0) throw undefined_correlation_error("patch symmetry is constant; the error regression is undefined");

  ErrorSymmetryFit fit;
  fit.slope = sse / sss;
  fit.intercept = me - fit.slope * ms;
  fit.pearson_r = pearson(patch_symm, err);
  fit.n = err.size();
  return fit;
}

}  // namespace segplex
