#pragma once

#include <string>
#include <vector>

#include "pcahmm/hmm.hpp"
#include "pcahmm/pca.hpp"

namespace pcahmm::forecast {

struct ForecastRecord {
  std::string as_of_date;   // last period used for fitting
  std::string target_date;  // period being forecast; empty when not yet observed
  std::vector<std::string> assets;
  std::size_t current_state = 0;
  Vector factor_forecast;      // k
  Vector normalized_forecast;  // n
  Vector raw_forecast;         // n
  std::vector<int> signs_raw;
  std::vector<int> signs_normalized;
};

struct FactorForecast {
  Vector fhat;
  std::size_t current_state = 0;
};

inline int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

inline std::vector<int> signs(std::span<const double> v) {
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sign_of(v[i]);
  return out;
}

/// Expected next observation given the current state: Σ_j P[state][j] μ_j.
inline Vector expected_next(const hmm::GaussianHmm& model, std::size_t state) {
  Vector f(model.dim(), 0.0);
  for (std::size_t j = 0; j < model.n_states(); ++j) {
    const double p = model.trans(state, j);
    for (std::size_t d = 0; d < model.dim(); ++d) f[d] += p * model.means(j, d);
  }
  return f;
}

/// One-step-ahead factor forecast from the last Viterbi state.
inline FactorForecast forecast_factors(const hmm::FitResult& fit, const hmm::ObservationSeq& obs) {
  const auto path = hmm::viterbi(fit.model, obs);
  const std::size_t state = path.back();
  return {expected_next(fit.model, state), state};
}

inline ForecastRecord assemble_record(const FactorForecast& ff, const pca::FactorModel& model) {
  const auto assets = pca::reconstruct_assets(ff.fhat, model);
  ForecastRecord rec;
  rec.current_state = ff.current_state;
  rec.factor_forecast = ff.fhat;
  rec.normalized_forecast = assets.yhat;
  rec.raw_forecast = assets.xhat;
  rec.signs_raw = signs(rec.raw_forecast);
  rec.signs_normalized = signs(rec.normalized_forecast);
  return rec;
}

/// Full forecast for the period after the factor panel ends.
inline ForecastRecord make_forecast(const hmm::FitResult& fit, const pca::FactorPanel& factors,
                                    const pca::FactorModel& model, std::string target_date = {}) {
  if (factors.values.cols() != model.k) {
    throw Error(ErrorCode::DimensionMismatch, "factor panel width does not match the model's k");
  }
  const hmm::ObservationSeq obs(factors.values);
  ForecastRecord rec = assemble_record(forecast_factors(fit, obs), model);
  rec.target_date = std::move(target_date);
  if (!factors.dates.empty()) rec.as_of_date = factors.dates.back();
  return rec;
}

}  // namespace pcahmm::forecast
