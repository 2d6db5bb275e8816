#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pcahmm/matrix.hpp"

namespace pcahmm::hmm {

/// T x k observation matrix, finite, T >= 1.
class ObservationSeq {
 public:
  explicit ObservationSeq(Matrix values) : values_(std::move(values)) {
    if (values_.rows() == 0 || values_.cols() == 0) {
      throw Error(ErrorCode::TooFewObservations, "observation sequence is empty");
    }
    if (!all_finite(values_.data())) throw Error(ErrorCode::InvalidMatrix, "observations contain non-finite values");
  }

  std::size_t length() const noexcept { return values_.rows(); }
  std::size_t dim() const noexcept { return values_.cols(); }
  std::span<const double> operator[](std::size_t t) const { return values_.row(t); }
  const Matrix& values() const noexcept { return values_; }

 private:
  Matrix values_;
};

/// Hidden Markov model with diagonal-Gaussian emissions.
struct GaussianHmm {
  Vector initial;    // N
  Matrix trans;      // N x N, row-stochastic
  Matrix means;      // N x k
  Matrix variances;  // N x k

  std::size_t n_states() const noexcept { return initial.size(); }
  std::size_t dim() const noexcept { return means.cols(); }

  /// Throws DimensionMismatch / InvalidMatrix / NonPositiveVariance when the
  /// parameters are inconsistent.
  void validate(double tol = 1e-9) const {
    const std::size_t n = n_states();
    if (n == 0) throw Error(ErrorCode::DimensionMismatch, "model has no states");
    if (trans.rows() != n || trans.cols() != n || means.rows() != n || variances.rows() != n ||
        variances.cols() != means.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "inconsistent HMM parameter shapes");
    }
    auto check_simplex = [&](std::span<const double> p, const char* what) {
      double s = 0.0;
      for (double v : p) {
        if (!(v >= 0.0)) throw Error(ErrorCode::InvalidMatrix, std::string(what) + " has a negative probability");
        s += v;
      }
      if (std::abs(s - 1.0) > tol) throw Error(ErrorCode::InvalidMatrix, std::string(what) + " does not sum to 1");
    };
    check_simplex(initial, "initial distribution");
    for (std::size_t i = 0; i < n; ++i) check_simplex(trans.row(i), "transition row");
    if (!all_finite(means.data())) throw Error(ErrorCode::InvalidMatrix, "non-finite state mean");
    for (double v : variances.data())
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::NonPositiveVariance, "state variance must be > 0");
  }
};

enum class AicPenalty { States, FreeParams };

struct EmSettings {
  double tol = 1e-4;
  int max_iter = 200;
  double variance_floor_rel = 1e-6;
  double variance_floor_abs = 1e-12;
  double empty_state_mass = 1e-8;
};

struct FitResult {
  GaussianHmm model;
  double log_likelihood = 0.0;
  Vector ll_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;  // EmptyStateWarning entries
};

struct AicEntry {
  std::size_t states = 0;
  std::optional<double> log_likelihood;
  std::optional<double> aic;
  std::string error;
};

struct ModelSelection {
  FitResult best;
  std::vector<AicEntry> table;
};

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2π)
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double gaussian_logpdf_diag(std::span<const double> x, std::span<const double> mean,
                                   std::span<const double> var) {
  if (x.size() != mean.size() || x.size() != var.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gaussian_logpdf_diag: length mismatch");
  }
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (!(var[d] > 0.0)) throw Error(ErrorCode::NonPositiveVariance, "variance must be > 0");
    const double r = x[d] - mean[d];
    s += -0.5 * (kLog2Pi + std::log(var[d])) - r * r / (2.0 * var[d]);
  }
  return s;
}

inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// log b_i(o_t) for every t, i.
inline Matrix emission_log_matrix(const GaussianHmm& model, const ObservationSeq& obs) {
  if (obs.dim() != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "observation dimension " + std::to_string(obs.dim()) +
                                                  " does not match model dimension " + std::to_string(model.dim()));
  }
  const std::size_t n = model.n_states();
  const std::size_t k = model.dim();
  Vector constant(n, 0.0);
  Matrix half_precision(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < k; ++d) {
      const double v = model.variances(i, d);
      if (!(v > 0.0)) throw Error(ErrorCode::NonPositiveVariance, "variance must be > 0");
      constant[i] -= 0.5 * (kLog2Pi + std::log(v));
      half_precision(i, d) = 0.5 / v;
    }
  Matrix out(obs.length(), n);
  for (std::size_t t = 0; t < obs.length(); ++t) {
    const auto x = obs[t];
    for (std::size_t i = 0; i < n; ++i) {
      const auto mu = model.means.row(i);
      const auto hp = half_precision.row(i);
      double q = 0.0;
      for (std::size_t d = 0; d < k; ++d) {
        const double r = x[d] - mu[d];
        q += r * r * hp[d];
      }
      out(t, i) = constant[i] - q;
    }
  }
  return out;
}

namespace detail {

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

struct Lattice {
  Matrix log_alpha;
  Matrix log_beta;
  Matrix log_b;
  double log_likelihood = 0.0;
};

// Forward pass; each step rescales by the running maximum before leaving log
// space, so no probability product can underflow.
inline Matrix forward_lattice(const GaussianHmm& model, const Matrix& log_b) {
  const std::size_t len = log_b.rows();
  const std::size_t n = model.n_states();
  Matrix la(len, n);
  for (std::size_t i = 0; i < n; ++i) la(0, i) = safe_log(model.initial[i]) + log_b(0, i);
  Vector w(n);
  for (std::size_t t = 1; t < len; ++t) {
    double m = kNegInf;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, la(t - 1, i));
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(la(t - 1, i) - m);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += w[i] * model.trans(i, j);
      la(t, j) = safe_log(s) + m + log_b(t, j);
    }
  }
  return la;
}

inline Matrix backward_lattice(const GaussianHmm& model, const Matrix& log_b) {
  const std::size_t len = log_b.rows();
  const std::size_t n = model.n_states();
  Matrix lb(len, n, 0.0);
  Vector w(n);
  for (std::size_t t = len - 1; t-- > 0;) {
    double m = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = log_b(t + 1, j) + lb(t + 1, j);
      m = std::max(m, w[j]);
    }
    for (std::size_t j = 0; j < n; ++j) w[j] = std::exp(w[j] - m);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += model.trans(i, j) * w[j];
      lb(t, i) = safe_log(s) + m;
    }
  }
  return lb;
}

inline Lattice forward_backward(const GaussianHmm& model, const ObservationSeq& obs) {
  Lattice lat;
  lat.log_b = emission_log_matrix(model, obs);
  lat.log_alpha = forward_lattice(model, lat.log_b);
  lat.log_beta = backward_lattice(model, lat.log_b);
  lat.log_likelihood = log_sum_exp(lat.log_alpha.row(obs.length() - 1));
  return lat;
}

// Sufficient statistics of one E-step.
struct Expectations {
  Matrix gamma;   // T x N state posteriors
  Matrix xi_sum;  // N x N expected transition counts
  double log_likelihood = 0.0;
};

// E-step entirely in log space.
inline Expectations log_space_expectations(const GaussianHmm& model, const ObservationSeq& obs) {
  const Lattice lat = forward_backward(model, obs);
  const double ll = lat.log_likelihood;
  const std::size_t len = obs.length();
  const std::size_t n = model.n_states();
  Expectations e{Matrix(len, n), Matrix(n, n), ll};
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < n; ++i) e.gamma(t, i) = std::exp(lat.log_alpha(t, i) + lat.log_beta(t, i) - ll);
  for (std::size_t t = 0; t + 1 < len; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (model.trans(i, j) > 0.0)
          e.xi_sum(i, j) += std::exp(lat.log_alpha(t, i) + std::log(model.trans(i, j)) + lat.log_b(t + 1, j) +
                                     lat.log_beta(t + 1, j) - ll);
  return e;
}

// E-step on emissions shifted by their per-step maximum, with normalized
// forward variables. Returns nullopt if a normalizer underflows or any value
// leaves the finite range; the caller then uses the log-space E-step.
inline std::optional<Expectations> scaled_expectations(const GaussianHmm& model, const ObservationSeq& obs) {
  constexpr double kTiny = 1e-290;
  const Matrix log_b = emission_log_matrix(model, obs);
  const std::size_t len = obs.length();
  const std::size_t n = model.n_states();

  Matrix b(len, n);
  double ll = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double m = kNegInf;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, log_b(t, i));
    ll += m;
    for (std::size_t i = 0; i < n; ++i) b(t, i) = std::exp(log_b(t, i) - m);
  }

  Matrix alpha(len, n);
  Vector scale(len);
  for (std::size_t t = 0; t < len; ++t) {
    auto at = alpha.row(t);
    if (t == 0) {
      for (std::size_t i = 0; i < n; ++i) at[i] = model.initial[i] * b(0, i);
    } else {
      const auto prev = alpha.row(t - 1);
      std::fill(at.begin(), at.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double a = prev[i];
        if (a == 0.0) continue;
        const auto pi = model.trans.row(i);
        for (std::size_t j = 0; j < n; ++j) at[j] += a * pi[j];
      }
      for (std::size_t j = 0; j < n; ++j) at[j] *= b(t, j);
    }
    double c = 0.0;
    for (double v : at) c += v;
    if (!(c > kTiny) || !std::isfinite(c)) return std::nullopt;
    for (double& v : at) v /= c;
    scale[t] = c;
    ll += std::log(c);
  }

  // Backward pass; expected transition counts accumulate alongside.
  Expectations e{Matrix(len, n), Matrix(n, n), ll};
  Matrix beta(len, n, 1.0);
  Vector w(n);
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t j = 0; j < n; ++j) w[j] = b(t + 1, j) * beta(t + 1, j) / scale[t + 1];
    for (std::size_t i = 0; i < n; ++i) {
      const auto pi = model.trans.row(i);
      auto xi = e.xi_sum.row(i);
      const double a = alpha(t, i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double q = pi[j] * w[j];
        s += q;
        xi[j] += a * q;
      }
      beta(t, i) = s;
    }
  }
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < n; ++i) e.gamma(t, i) = alpha(t, i) * beta(t, i);
  if (!std::isfinite(ll) || !all_finite(e.gamma.data()) || !all_finite(e.xi_sum.data())) return std::nullopt;
  return e;
}

inline Expectations expectations(const GaussianHmm& model, const ObservationSeq& obs) {
  if (auto e = scaled_expectations(model, obs)) return std::move(*e);
  return log_space_expectations(model, obs);
}

inline Vector sample_mean(const ObservationSeq& obs) {
  Vector mean(obs.dim(), 0.0);
  for (std::size_t t = 0; t < obs.length(); ++t)
    for (std::size_t d = 0; d < obs.dim(); ++d) mean[d] += obs[t][d];
  for (double& m : mean) m /= static_cast<double>(obs.length());
  return mean;
}

// Sample variance with T-1 denominator (T >= 2).
inline Vector sample_variance(const ObservationSeq& obs, const Vector& mean) {
  Vector var(obs.dim(), 0.0);
  for (std::size_t t = 0; t < obs.length(); ++t)
    for (std::size_t d = 0; d < obs.dim(); ++d) {
      const double r = obs[t][d] - mean[d];
      var[d] += r * r;
    }
  for (double& v : var) v /= static_cast<double>(obs.length() - 1);
  return var;
}

inline Vector variance_floor(const ObservationSeq& obs, const EmSettings& s) {
  const Vector var = sample_variance(obs, sample_mean(obs));
  Vector floor(var.size());
  for (std::size_t d = 0; d < var.size(); ++d) floor[d] = std::max(s.variance_floor_rel * var[d], s.variance_floor_abs);
  return floor;
}

}  // namespace detail

/// log P(obs | model) by the forward recursion.
inline double log_forward(const GaussianHmm& model, const ObservationSeq& obs) {
  const Matrix log_b = emission_log_matrix(model, obs);
  const Matrix la = detail::forward_lattice(model, log_b);
  return log_sum_exp(la.row(obs.length() - 1));
}

/// log P(path, obs | model).
inline double path_log_probability(const GaussianHmm& model, const ObservationSeq& obs,
                                   std::span<const std::size_t> path) {
  if (path.size() != obs.length()) throw Error(ErrorCode::DimensionMismatch, "path length differs from observations");
  double s = detail::safe_log(model.initial[path[0]]) +
             gaussian_logpdf_diag(obs[0], model.means.row(path[0]), model.variances.row(path[0]));
  for (std::size_t t = 1; t < path.size(); ++t) {
    s += detail::safe_log(model.trans(path[t - 1], path[t]));
    s += gaussian_logpdf_diag(obs[t], model.means.row(path[t]), model.variances.row(path[t]));
  }
  return s;
}

/// Most probable state path. Ties go to the lower state index, both for the
/// final state and at every backtrack step.
inline std::vector<std::size_t> viterbi(const GaussianHmm& model, const ObservationSeq& obs) {
  const Matrix log_b = emission_log_matrix(model, obs);
  const std::size_t len = obs.length();
  const std::size_t n = model.n_states();
  Matrix log_p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) log_p(i, j) = detail::safe_log(model.trans(i, j));

  Matrix delta(len, n);
  std::vector<std::size_t> back(len * n, 0);
  for (std::size_t i = 0; i < n; ++i) delta(0, i) = detail::safe_log(model.initial[i]) + log_b(0, i);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t arg = 0;
      double best = delta(t - 1, 0) + log_p(0, j);
      for (std::size_t i = 1; i < n; ++i) {
        const double v = delta(t - 1, i) + log_p(i, j);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      delta(t, j) = best + log_b(t, j);
      back[t * n + j] = arg;
    }
  }
  std::vector<std::size_t> path(len);
  std::size_t last = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (delta(len - 1, i) > delta(len - 1, last)) last = i;
  path[len - 1] = last;
  for (std::size_t t = len - 1; t > 0; --t) path[t - 1] = back[t * n + path[t]];
  return path;
}

/// Deterministic starting point for EM: uniform initial and transition
/// probabilities, every state at the sample variance, and state means spread
/// symmetrically around the sample mean by 0.1 sample standard deviations per
/// step so that EM can separate the states.
inline GaussianHmm init_params(const ObservationSeq& obs, std::size_t states, const EmSettings& settings = {}) {
  if (states < 2) throw Error(ErrorCode::ConfigError, "state count must be >= 2");
  if (obs.length() < 2) throw Error(ErrorCode::TooFewObservations, "need at least 2 observations");
  const std::size_t k = obs.dim();
  const Vector mean = detail::sample_mean(obs);
  const Vector var = detail::sample_variance(obs, mean);
  const Vector floor = detail::variance_floor(obs, settings);

  GaussianHmm m;
  const double u = 1.0 / static_cast<double>(states);
  m.initial.assign(states, u);
  m.trans = Matrix(states, states, u);
  m.means = Matrix(states, k);
  m.variances = Matrix(states, k);
  const double centre = 0.5 * static_cast<double>(states - 1);
  for (std::size_t i = 0; i < states; ++i) {
    for (std::size_t d = 0; d < k; ++d) {
      m.means(i, d) = mean[d] + (static_cast<double>(i) - centre) * 0.1 * std::sqrt(var[d]);
      m.variances(i, d) = std::max(var[d], floor[d]);
    }
  }
  return m;
}

/// Baum-Welch from a given starting model.
///
/// ll_trace[i] is the log-likelihood of the i-th parameter iterate; the loop
/// stops once an improvement falls below `tol`, and the returned model is the
/// iterate whose likelihood is reported last. A state whose posterior mass is
/// below `empty_state_mass` keeps its previous emission parameters and
/// transition row for that iteration.
inline FitResult baum_welch_from(const ObservationSeq& obs, GaussianHmm model, const EmSettings& settings = {}) {
  model.validate();
  if (model.dim() != obs.dim()) throw Error(ErrorCode::DimensionMismatch, "model and observation dimensions differ");
  const std::size_t n = model.n_states();
  const std::size_t k = obs.dim();
  const std::size_t len = obs.length();
  if (len < 2) throw Error(ErrorCode::TooFewObservations, "need at least 2 observations");
  const Vector floor = detail::variance_floor(obs, settings);

  FitResult result;
  Vector gamma_sum(n);

  for (int iter = 0;; ++iter) {
    const detail::Expectations ex = detail::expectations(model, obs);
    const double ll = ex.log_likelihood;
    if (!std::isfinite(ll)) throw Error(ErrorCode::ConvergenceFailure, "log-likelihood is not finite");
    result.ll_trace.push_back(ll);
    if (iter > 0 && ll - result.ll_trace[result.ll_trace.size() - 2] < settings.tol) {
      result.converged = true;
      break;
    }
    if (iter == settings.max_iter) break;

    const Matrix& gamma = ex.gamma;
    const Matrix& xi_sum = ex.xi_sum;
    std::fill(gamma_sum.begin(), gamma_sum.end(), 0.0);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t i = 0; i < n; ++i) gamma_sum[i] += gamma(t, i);

    // M-step.
    double init_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) init_total += gamma(0, i);
    for (std::size_t i = 0; i < n; ++i) model.initial[i] = gamma(0, i) / init_total;

    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += xi_sum(i, j);
      if (row < settings.empty_state_mass) continue;
      for (std::size_t j = 0; j < n; ++j) model.trans(i, j) = xi_sum(i, j) / row;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const double mass = gamma_sum[i];
      if (mass < settings.empty_state_mass) {
        result.warnings.push_back("EmptyStateWarning: state " + std::to_string(i) + " at iteration " +
                                  std::to_string(iter));
        continue;
      }
      for (std::size_t d = 0; d < k; ++d) {
        double s = 0.0;
        for (std::size_t t = 0; t < len; ++t) s += gamma(t, i) * obs[t][d];
        const double mu = s / mass;
        double v = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          const double r = obs[t][d] - mu;
          v += gamma(t, i) * r * r;
        }
        model.means(i, d) = mu;
        model.variances(i, d) = std::max(v / mass, floor[d]);
      }
    }
    result.iterations = iter + 1;
  }

  result.model = std::move(model);
  result.log_likelihood = result.ll_trace.back();
  return result;
}

inline FitResult baum_welch(const ObservationSeq& obs, std::size_t states, const EmSettings& settings = {}) {
  if (states < 2) throw Error(ErrorCode::ConfigError, "state count must be >= 2");
  if (obs.length() < 2 * states) {
    throw Error(ErrorCode::TooFewObservations, std::to_string(obs.length()) + " observations cannot support " +
                                                   std::to_string(states) + " states");
  }
  return baum_welch_from(obs, init_params(obs, states, settings), settings);
}

/// (N-1) initial + N(N-1) transition + 2Nk emission parameters.
inline std::size_t free_parameter_count(std::size_t states, std::size_t dim) {
  return (states - 1) + states * (states - 1) + 2 * states * dim;
}

inline double aic(double log_likelihood, std::size_t states, std::size_t dim, AicPenalty penalty) {
  const double count = penalty == AicPenalty::States ? static_cast<double>(states)
                                                     : static_cast<double>(free_parameter_count(states, dim));
  return -2.0 * log_likelihood + 2.0 * count;
}

/// Index of the minimal AIC entry; ties go to the smaller state count.
/// Entries without an AIC are ignored. Returns table.size() if none qualify.
inline std::size_t best_aic_index(const std::vector<AicEntry>& table) {
  std::size_t best = table.size();
  for (std::size_t c = 0; c < table.size(); ++c) {
    if (!table[c].aic) continue;
    if (best == table.size() || *table[c].aic < *table[best].aic ||
        (*table[c].aic == *table[best].aic && table[c].states < table[best].states)) {
      best = c;
    }
  }
  return best;
}

inline std::vector<std::size_t> default_state_candidates() { return {2, 3, 4, 5, 6, 7, 8}; }

/// Fits every candidate state count and keeps the lowest-AIC model.
inline ModelSelection select_model(const ObservationSeq& obs, const std::vector<std::size_t>& candidates,
                                   const EmSettings& settings = {}, AicPenalty penalty = AicPenalty::FreeParams) {
  if (candidates.empty()) throw Error(ErrorCode::ConfigError, "no candidate state counts");
  std::vector<AicEntry> table;
  std::vector<std::optional<FitResult>> fits;
  for (std::size_t states : candidates) {
    AicEntry entry;
    entry.states = states;
    try {
      FitResult fit = baum_welch(obs, states, settings);
      entry.log_likelihood = fit.log_likelihood;
      entry.aic = aic(fit.log_likelihood, states, obs.dim(), penalty);
      fits.emplace_back(std::move(fit));
    } catch (const Error& e) {
      entry.error = e.what();
      fits.emplace_back(std::nullopt);
    }
    table.push_back(std::move(entry));
  }
  const std::size_t best = best_aic_index(table);
  if (best == table.size()) {
    std::string reasons;
    for (const auto& e : table) reasons += " [" + std::to_string(e.states) + ": " + e.error + "]";
    throw Error(ErrorCode::AllFitsFailed, "every candidate fit failed:" + reasons);
  }
  return {std::move(*fits[best]), std::move(table)};
}

}  // namespace pcahmm::hmm
