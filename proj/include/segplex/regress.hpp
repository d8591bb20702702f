#pragma once

// Ordinary least squares with an intercept, solved by Householder QR.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segplex/error.hpp"
#include "segplex/features.hpp"

namespace segplex {

inline constexpr std::string_view kInterceptLabel = "intercept";

// n x (1 + k) design: a column of ones followed by k labelled regressors.
class DesignMatrix {
 public:
  DesignMatrix(std::vector<std::string> labels, std::span<const std::vector<double>> rows)
      : labels_(std::move(labels)), rows_(rows.size()) {
    if (labels_.empty()) throw config_error("design needs at least one regressor");
    std::set<std::string> unique(labels_.begin(), labels_.end());
    if (unique.size() != labels_.size()) throw config_error("regressor labels must be unique");
    if (unique.count(std::string(kInterceptLabel))) throw config_error("'intercept' is reserved");
    const std::size_t p = cols();
    data_.assign(rows_ * p, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      if (rows[i].size() != labels_.size())
        throw config_error("design row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                           " values, expected " + std::to_string(labels_.size()));
      at(i, 0) = 1.0;
      for (std::size_t j = 0; j < labels_.size(); ++j) {
        if (!std::isfinite(rows[i][j]))
          throw config_error("non-finite value in design row " + std::to_string(i) + ", column '" + labels_[j] + "'");
        at(i, j + 1) = rows[i][j];
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return labels_.size() + 1; }
  const std::vector<std::string>& regressor_labels() const noexcept { return labels_; }

  // Includes the intercept column first.
  std::vector<std::string> column_labels() const {
    std::vector<std::string> out{std::string(kInterceptLabel)};
    out.insert(out.end(), labels_.begin(), labels_.end());
    return out;
  }

  // Column-major storage.
  double at(std::size_t row, std::size_t col) const { return data_[col * rows_ + row]; }
  std::span<const double> column(std::size_t col) const { return {data_.data() + col * rows_, rows_}; }

 private:
  double& at(std::size_t row, std::size_t col) { return data_[col * rows_ + row]; }

  std::vector<std::string> labels_;
  std::size_t rows_;
  std::vector<double> data_;
};

inline DesignMatrix design_from_features(std::span<const FeatureVector> features,
                                         const std::vector<std::string>& labels) {
  std::vector<std::vector<double>> rows;
  rows.reserve(features.size());
  for (const auto& fv : features) {
    std::vector<double> row;
    row.reserve(labels.size());
    for (const auto& label : labels) {
      auto v = feature_value(fv, label);
      if (!v) throw missing_regressor_error(label);
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  return DesignMatrix(labels, rows);
}

struct FitDiagnostics {
  double rss = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

struct RegressionModel {
  std::vector<std::string> labels;
  double intercept = 0.0;
  std::vector<double> coefficients;  // aligned with labels
  FitDiagnostics diagnostics;
  std::string dataset_id;
  std::string fit_timestamp;

  std::optional<double> coefficient(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return coefficients[i];
    return std::nullopt;
  }
};

// Relative size below which a QR diagonal entry marks a dependent column.
inline constexpr double kRankTolerance = 1e-10;

inline RegressionModel fit_ols(const DesignMatrix& X, std::span<const double> y) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (y.size() != n)
    throw config_error("design has " + std::to_string(n) + " rows but " + std::to_string(y.size()) + " ratings");
  for (double v : y)
    if (!std::isfinite(v)) throw config_error("non-finite rating");
  const auto names = X.column_labels();
  if (n < p)
    throw rank_deficient_error(names, std::to_string(n) + " rows cannot determine " + std::to_string(p) +
                                          " coefficients");

  // a: working copy, column-major; overwritten with R above the diagonal and Householder vectors below.
  std::vector<double> a(n * p);
  std::vector<double> col_norm(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto c = X.column(j);
    std::copy(c.begin(), c.end(), a.begin() + static_cast<std::ptrdiff_t>(j * n));
    double s = 0.0;
    for (double v : c) s += v * v;
    col_norm[j] = std::sqrt(s);
  }
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[j * n + i]; };
  std::vector<double> diag(p);
  std::vector<double> rhs(y.begin(), y.end());

  for (std::size_t j = 0; j < p; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < n; ++i) norm += A(i, j) * A(i, j);
    norm = std::sqrt(norm);

    if (col_norm[j] == 0.0 || norm <= kRankTolerance * col_norm[j]) {
      // Column j lies in the span of columns [0, j): solve R[0:j,0:j] c = R[0:j, j].
      std::vector<double> coef(j);
      for (std::size_t ii = j; ii-- > 0;) {
        double s = A(ii, j);
        for (std::size_t kk = ii + 1; kk < j; ++kk) s -= A(ii, kk) * coef[kk];
        coef[ii] = s / diag[ii];
      }
      std::vector<std::string> involved{names[j]};
      std::string partners;
      double biggest = 0.0;
      for (double c : coef) biggest = std::max(biggest, std::abs(c));
      for (std::size_t ii = 0; ii < j; ++ii) {
        if (std::abs(coef[ii]) > 1e-8 * biggest) {
          involved.push_back(names[ii]);
          partners += (partners.empty() ? "'" : ", '") + names[ii] + "'";
        }
      }
      throw rank_deficient_error(
          involved, col_norm[j] == 0.0 || partners.empty()
                        ? "column '" + names[j] + "' is identically zero"
                        : "column '" + names[j] + "' is collinear with " + partners);
    }

    const double alpha = A(j, j) > 0 ? -norm : norm;
    // v = x - alpha e1, stored in place; H = I - 2 v v^T / (v^T v).
    A(j, j) -= alpha;
    double vtv = 0.0;
    for (std::size_t i = j; i < n; ++i) vtv += A(i, j) * A(i, j);
    for (std::size_t k = j + 1; k < p; ++k) {
      double dot = 0.0;
      for (std::size_t i = j; i < n; ++i) dot += A(i, j) * A(i, k);
      const double f = 2.0 * dot / vtv;
      for (std::size_t i = j; i < n; ++i) A(i, k) -= f * A(i, j);
    }
    double dot = 0.0;
    for (std::size_t i = j; i < n; ++i) dot += A(i, j) * rhs[i];
    const double f = 2.0 * dot / vtv;
    for (std::size_t i = j; i < n; ++i) rhs[i] -= f * A(i, j);
    diag[j] = alpha;
  }

  std::vector<double> beta(p);
  for (std::size_t j = p; j-- > 0;) {
    double s = rhs[j];
    for (std::size_t k = j + 1; k < p; ++k) s -= A(j, k) * beta[k];
    beta[j] = s / diag[j];
  }

  RegressionModel model;
  model.labels = X.regressor_labels();
  model.intercept = beta[0];
  model.coefficients.assign(beta.begin() + 1, beta.end());

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double rss = 0.0;
  double tss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fitted = 0.0;
    for (std::size_t j = 0; j < p; ++j) fitted += X.at(i, j) * beta[j];
    rss += (y[i] - fitted) * (y[i] - fitted);
    tss += (y[i] - mean) * (y[i] - mean);
  }
  model.diagnostics.rss = rss;
  model.diagnostics.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  model.diagnostics.n = n;
  return model;
}

// Values aligned with model.labels.
inline double predict(const RegressionModel& model, std::span<const double> values) {
  if (values.size() != model.coefficients.size())
    throw config_error("expected " + std::to_string(model.coefficients.size()) + " regressor values");
  double out = model.intercept;
  for (std::size_t i = 0; i < values.size(); ++i) out += model.coefficients[i] * values[i];
  return out;
}

// Not clamped to the rating range.
inline double predict(const RegressionModel& model, const FeatureVector& features) {
  double out = model.intercept;
  for (std::size_t i = 0; i < model.labels.size(); ++i) {
    auto v = feature_value(features, model.labels[i]);
    if (!v) throw missing_regressor_error(model.labels[i]);
    out += model.coefficients[i] * *v;
  }
  return out;
}

inline nlohmann::ordered_json model_to_json(const RegressionModel& m) {
  nlohmann::ordered_json j;
  j["dataset_id"] = m.dataset_id;
  j["labels"] = m.labels;
  j["intercept"] = m.intercept;
  nlohmann::ordered_json coefs = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < m.labels.size(); ++i) coefs[m.labels[i]] = m.coefficients[i];
  j["coefficients"] = std::move(coefs);
  j["diagnostics"] = {{"rss", m.diagnostics.rss}, {"r_squared", m.diagnostics.r_squared}, {"n", m.diagnostics.n}};
  j["fit_timestamp"] = m.fit_timestamp;
  return j;
}

inline RegressionModel model_from_json(const nlohmann::json& j) {
  try {
    RegressionModel m;
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.intercept = j.at("intercept").get<double>();
    const auto& coefs = j.at("coefficients");
    for (const auto& label : m.labels) m.coefficients.push_back(coefs.at(label).get<double>());
    if (coefs.size() != m.labels.size()) throw field_error("coefficients", "labels do not match coefficients");
    const auto& d = j.at("diagnostics");
    m.diagnostics.rss = d.at("rss").get<double>();
    m.diagnostics.r_squared = d.at("r_squared").get<double>();
    m.diagnostics.n = d.at("n").get<std::size_t>();
    m.fit_timestamp = j.at("fit_timestamp").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("invalid model document: ") + e.what());
  }
}

}  // namespace segplex
