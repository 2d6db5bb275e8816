#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcahmm/ingest.hpp"
#include "pcahmm/linalg.hpp"

namespace pcahmm::pca {

/// Column means and sample standard deviations (T-1 denominator).
struct NormalizationStats {
  Vector mu;
  Vector sigma;
};

struct Normalized {
  Matrix y;
  NormalizationStats stats;
};

struct FactorModel {
  NormalizationStats stats;
  Vector eigenvalues;  // all n, non-increasing
  Matrix loadings;     // n x k, leading eigenvectors
  std::size_t k = 0;
  double p = 0.0;
  double explained_fraction = 0.0;

  std::size_t num_assets() const noexcept { return loadings.rows(); }
};

struct FactorPanel {
  std::vector<std::string> dates;
  Matrix values;  // T x k
};

struct AssetForecast {
  Vector yhat;  // normalized space
  Vector xhat;  // raw return space
};

inline constexpr double kDegenerateSigma = 1e-12;

/// Standardizes each column: (x - mean) / sample std.
inline Normalized normalize(const ingest::ReturnsPanel& x) {
  const std::size_t rows = x.periods();
  const std::size_t n = x.num_assets();
  if (rows < 3) throw Error(ErrorCode::TooFewRows, "normalization needs at least 3 periods");
  Normalized out{Matrix(rows, n), {Vector(n), Vector(n)}};
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
      const double v = x.returns(t, j);
      if (is_missing(v)) throw Error(ErrorCode::MissingData, "missing return for " + x.assets[j]);
      sum += v;
    }
    const double mean = sum / static_cast<double>(rows);
    double ss = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
      const double d = x.returns(t, j) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(rows - 1));
    if (!(sd >= kDegenerateSigma)) {
      throw Error(ErrorCode::DegenerateColumn, "asset " + x.assets[j] + " has zero variance in the window");
    }
    out.stats.mu[j] = mean;
    out.stats.sigma[j] = sd;
    for (std::size_t t = 0; t < rows; ++t) out.y(t, j) = (x.returns(t, j) - mean) / sd;
  }
  return out;
}

/// Smallest k whose cumulative eigenvalue share reaches 1 - p. p == 0 keeps
/// every factor.
inline std::size_t select_factor_count(const Vector& eigenvalues, double p) {
  const std::size_t n = eigenvalues.size();
  if (p == 0.0) return n;
  double total = 0.0;
  for (double l : eigenvalues) total += l;
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += eigenvalues[k] / total;
    if (cum >= 1.0 - p) return k + 1;
  }
  return n;
}

/// PCA of H = YᵀY truncated to the leading factors explaining at least 1 - p
/// of the eigenvalue mass. Stats default to the identity transform.
inline FactorModel fit_factor_model(const Matrix& y, double p, NormalizationStats stats = {}) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::ConfigError, "noise fraction p must lie in [0, 1)");
  const std::size_t n = y.cols();
  if (n == 0 || y.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "empty return matrix");
  if (!all_finite(y.data())) throw Error(ErrorCode::InvalidMatrix, "normalized returns contain non-finite values");
  if (stats.mu.empty()) {
    stats.mu.assign(n, 0.0);
    stats.sigma.assign(n, 1.0);
  }
  if (stats.mu.size() != n || stats.sigma.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "normalization stats do not match column count");
  }

  const auto eig = linalg::sym_eig(linalg::SymMatrix(gram(y)));
  double total = 0.0;
  for (double l : eig.eigenvalues) total += l;
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidMatrix, "covariance matrix has zero trace");

  FactorModel model;
  model.stats = std::move(stats);
  model.eigenvalues = eig.eigenvalues;
  model.p = p;
  model.k = select_factor_count(eig.eigenvalues, p);
  model.loadings = Matrix(n, model.k);
  double kept = 0.0;
  for (std::size_t c = 0; c < model.k; ++c) {
    kept += eig.eigenvalues[c];
    for (std::size_t r = 0; r < n; ++r) model.loadings(r, c) = eig.eigenvectors(r, c);
  }
  model.explained_fraction = kept / total;
  return model;
}

inline FactorModel fit_factor_model(const Normalized& norm, double p) {
  return fit_factor_model(norm.y, p, norm.stats);
}

/// f = Y E_k.
inline FactorPanel factor_returns(const Matrix& y, const FactorModel& model, std::vector<std::string> dates = {}) {
  if (y.cols() != model.num_assets()) {
    throw Error(ErrorCode::DimensionMismatch, "return matrix has " + std::to_string(y.cols()) +
                                                  " columns, model expects " + std::to_string(model.num_assets()));
  }
  if (!dates.empty() && dates.size() != y.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "date count does not match rows");
  }
  return {std::move(dates), matmul(y, model.loadings)};
}

/// Maps a k-factor forecast back to normalized and raw asset returns. The
/// truncated factors contribute zero.
inline AssetForecast reconstruct_assets(std::span<const double> fhat, const FactorModel& model) {
  if (fhat.size() != model.k) {
    throw Error(ErrorCode::DimensionMismatch, "factor forecast has length " + std::to_string(fhat.size()) +
                                                  ", model has k=" + std::to_string(model.k));
  }
  const std::size_t n = model.num_assets();
  AssetForecast out{Vector(n), Vector(n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.yhat[j] = dot(fhat, model.loadings.row(j));
    out.xhat[j] = model.stats.sigma[j] * out.yhat[j] + model.stats.mu[j];
  }
  return out;
}

}  // namespace pcahmm::pca
