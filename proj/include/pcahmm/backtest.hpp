#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "pcahmm/forecast.hpp"
#include "pcahmm/ingest.hpp"

namespace pcahmm::backtest {

enum class Strategy { Raw = 1, Normalized = 2 };

struct BacktestConfig {
  std::size_t window_length = 520;
  std::size_t step = 1;
  std::size_t horizon = 100;
  double p = 0.15;
  std::size_t min_assets = 400;
  std::vector<std::size_t> state_candidates = hmm::default_state_candidates();
  std::size_t periods_per_year = 52;
  hmm::AicPenalty aic_penalty = hmm::AicPenalty::FreeParams;
  hmm::EmSettings em;
  double risk_free = 0.0;  // per period
  unsigned threads = 1;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (window_length < 3) fail("window_length must be >= 3");
    if (step < 1) fail("step must be >= 1");
    if (horizon < 1) fail("horizon must be >= 1");
    if (!(p >= 0.0 && p < 1.0)) fail("p must lie in [0, 1)");
    if (state_candidates.empty()) fail("state_candidates must not be empty");
    for (std::size_t s : state_candidates)
      if (s < 2) fail("state candidates must be >= 2");
    if (periods_per_year < 1) fail("periods_per_year must be >= 1");
    if (!(em.tol > 0.0)) fail("em tol must be > 0");
    if (em.max_iter < 1) fail("em max_iter must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
  }
};

/// Everything produced by fitting the pipeline on one complete-case window.
struct WindowFit {
  pca::Normalized normalized;
  pca::FactorModel model;
  pca::FactorPanel factors;
  hmm::ModelSelection selection;
  forecast::ForecastRecord forecast;
};

struct WindowResult {
  std::size_t index = 0;
  forecast::ForecastRecord forecast;
  Vector realized;  // per forecast asset; kMissing when not observed
  std::size_t k = 0;
  std::size_t n_states = 0;
  double explained_fraction = 0.0;
  Vector sorted_state_means;  // averaged over factors, non-increasing
  Vector sorted_state_vars;
  std::vector<hmm::AicEntry> aic_table;
  bool converged = false;
  Vector weights1;
  Vector weights2;
  double strategy1_return = 0.0;
  double strategy2_return = 0.0;
};

struct SkippedWindow {
  std::size_t index = 0;
  std::string target_date;
  std::string reason;
};

struct StrategyMetrics {
  Vector returns;
  Vector cumulative;  // compounded, starts from the first period's return
  std::size_t wins = 0;
  std::size_t trials = 0;
  std::optional<double> winning_probability;
  std::optional<double> sharpe;
  std::string sharpe_error;
};

struct BacktestReport {
  BacktestConfig config;
  std::vector<WindowResult> windows;
  std::vector<SkippedWindow> skipped;
  std::vector<std::string> dates;  // target date per window
  StrategyMetrics strategy1;
  StrategyMetrics strategy2;
  StrategyMetrics buy_and_hold;
};

struct SignedOutcome {
  int sign = 0;
  double realized = 0.0;
};

// ---------------------------------------------------------------- metrics --

/// Fraction of nonzero-sign forecasts whose sign matches the realized
/// return. Zero realized returns are misses.
inline double winning_probability(std::span<const SignedOutcome> records) {
  std::size_t trials = 0, wins = 0;
  for (const auto& r : records) {
    if (r.sign == 0) continue;
    ++trials;
    if (forecast::sign_of(r.realized) == r.sign) ++wins;
  }
  if (trials == 0) throw Error(ErrorCode::EmptyInput, "no nonzero sign forecasts to score");
  return static_cast<double>(wins) / static_cast<double>(trials);
}

/// (mean - rf) / sample std, scaled by sqrt(periods_per_year).
inline double annualized_sharpe(std::span<const double> returns, std::size_t periods_per_year, double rf = 0.0) {
  const std::size_t len = returns.size();
  if (len < 2) throw Error(ErrorCode::TooShort, "Sharpe ratio needs at least 2 returns");
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(len);
  const bool constant = std::all_of(returns.begin(), returns.end(), [&](double r) { return r == returns[0]; });
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(len - 1));
  if (constant || sd == 0.0) throw Error(ErrorCode::ZeroVolatility, "return series has zero volatility");
  return (mean - rf) / sd * std::sqrt(static_cast<double>(periods_per_year));
}

inline Vector cumulative_returns(std::span<const double> returns) {
  Vector out(returns.size());
  double growth = 1.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    growth *= 1.0 + returns[i];
    out[i] = growth - 1.0;
  }
  return out;
}

// ------------------------------------------------------------- strategies --

/// Equal-weight long/short positions from the forecast signs. Assets with a
/// zero sign, or masked out by `tradable`, get weight 0.
inline Vector strategy_positions(Strategy strategy, const forecast::ForecastRecord& record,
                                 std::span<const bool> tradable = {}) {
  const auto& s = strategy == Strategy::Raw ? record.signs_raw : record.signs_normalized;
  if (!tradable.empty() && tradable.size() != s.size()) {
    throw Error(ErrorCode::DimensionMismatch, "tradable mask length differs from forecast");
  }
  std::size_t active = 0;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] != 0 && (tradable.empty() || tradable[j])) ++active;
  if (active == 0) throw Error(ErrorCode::NoPositions, "every forecast sign is zero");
  Vector w(s.size(), 0.0);
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] != 0 && (tradable.empty() || tradable[j])) w[j] = static_cast<double>(s[j]) / static_cast<double>(active);
  return w;
}

/// Realized portfolio return; missing realized returns carry zero weight.
inline double portfolio_return(std::span<const double> weights, std::span<const double> realized) {
  double r = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j)
    if (weights[j] != 0.0) r += weights[j] * realized[j];
  return r;
}

inline void finalize_sharpe(StrategyMetrics& m, std::size_t periods_per_year, double rf) {
  m.cumulative = cumulative_returns(m.returns);
  try {
    m.sharpe = annualized_sharpe(m.returns, periods_per_year, rf);
  } catch (const Error& e) {
    m.sharpe.reset();
    m.sharpe_error = std::string(to_string(e.code()));
  }
}

/// Weekly-rebalanced equal-weight portfolio of every asset with an observed
/// return in each listed period. A period with nothing observed holds cash (0).
inline StrategyMetrics buy_and_hold(const ingest::ReturnsPanel& panel, std::span<const std::size_t> rows,
                                    std::size_t periods_per_year = 52, double rf = 0.0) {
  StrategyMetrics m;
  for (std::size_t t : rows) {
    if (t >= panel.periods()) throw Error(ErrorCode::DimensionMismatch, "row outside the panel");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < panel.num_assets(); ++j) {
      const double r = panel.returns(t, j);
      if (is_missing(r)) continue;
      sum += r;
      ++count;
      ++m.trials;
      if (r > 0.0) ++m.wins;
    }
    m.returns.push_back(count == 0 ? 0.0 : sum / static_cast<double>(count));
  }
  if (m.trials > 0) m.winning_probability = static_cast<double>(m.wins) / static_cast<double>(m.trials);
  finalize_sharpe(m, periods_per_year, rf);
  return m;
}

// --------------------------------------------------------------- pipeline --

/// Normalize, truncate, fit and select the HMM, and forecast the next period
/// for one complete-case window.
inline WindowFit fit_window(const ingest::ReturnsPanel& window, const BacktestConfig& cfg,
                            std::string target_date = {}) {
  WindowFit fit;
  fit.normalized = pca::normalize(window);
  fit.model = pca::fit_factor_model(fit.normalized, cfg.p);
  fit.factors = pca::factor_returns(fit.normalized.y, fit.model, window.dates);
  const hmm::ObservationSeq obs(fit.factors.values);
  fit.selection = hmm::select_model(obs, cfg.state_candidates, cfg.em, cfg.aic_penalty);
  fit.forecast = forecast::make_forecast(fit.selection.best, fit.factors, fit.model, std::move(target_date));
  fit.forecast.assets = window.assets;
  return fit;
}

/// State means and variances averaged over factors, ordered by decreasing mean.
inline std::pair<Vector, Vector> sorted_state_summary(const hmm::GaussianHmm& model) {
  const std::size_t n = model.n_states();
  const double k = static_cast<double>(model.dim());
  Vector mean(n, 0.0), var(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < model.dim(); ++d) {
      mean[i] += model.means(i, d);
      var[i] += model.variances(i, d);
    }
    mean[i] /= k;
    var[i] /= k;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  Vector sm(n), sv(n);
  for (std::size_t r = 0; r < n; ++r) {
    sm[r] = mean[order[r]];
    sv[r] = var[order[r]];
  }
  return {sm, sv};
}

inline std::size_t required_periods(const BacktestConfig& cfg) {
  return cfg.window_length + (cfg.horizon - 1) * cfg.step + 1;
}

namespace detail {

using WindowOutcome = std::variant<WindowResult, SkippedWindow>;

inline WindowOutcome evaluate_window(const ingest::ReturnsPanel& panel, const BacktestConfig& cfg,
                                     const std::map<std::string, std::size_t>& column_of, std::size_t index) {
  const std::size_t start = index * cfg.step;
  const std::size_t target = start + cfg.window_length;
  try {
    const auto window = ingest::window_view(panel, start, cfg.window_length, cfg.min_assets);
    WindowFit fit = fit_window(window, cfg, panel.dates[target]);
    if (!(fit.forecast.as_of_date < fit.forecast.target_date)) {
      throw Error(ErrorCode::UnsortedDates, "fitting window reaches the target period");
    }

    WindowResult w;
    w.index = index;
    w.k = fit.model.k;
    w.explained_fraction = fit.model.explained_fraction;
    w.n_states = fit.selection.best.model.n_states();
    w.converged = fit.selection.best.converged;
    w.aic_table = fit.selection.table;
    std::tie(w.sorted_state_means, w.sorted_state_vars) = sorted_state_summary(fit.selection.best.model);

    const std::size_t n = window.num_assets();
    w.realized.resize(n);
    // std::vector<bool> is not contiguous, so the mask lives in a bool array.
    auto tradable = std::make_unique<bool[]>(n);
    for (std::size_t j = 0; j < n; ++j) {
      w.realized[j] = panel.returns(target, column_of.at(window.assets[j]));
      tradable[j] = !is_missing(w.realized[j]);
    }
    const std::span<const bool> mask(tradable.get(), n);

    auto positions = [&](Strategy s) {
      try {
        return strategy_positions(s, fit.forecast, mask);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoPositions) throw;
        return Vector(n, 0.0);
      }
    };
    w.weights1 = positions(Strategy::Raw);
    w.weights2 = positions(Strategy::Normalized);
    w.strategy1_return = portfolio_return(w.weights1, w.realized);
    w.strategy2_return = portfolio_return(w.weights2, w.realized);
    w.forecast = std::move(fit.forecast);
    return w;
  } catch (const Error& e) {
    return SkippedWindow{index, panel.dates[target], e.what()};
  }
}

}  // namespace detail

/// Rolls the pipeline over `cfg.horizon` windows starting at the first
/// period. Windows are independent; with cfg.threads > 1 they are evaluated
/// concurrently and assembled in chronological order, giving the same report
/// as a sequential run.
inline BacktestReport run_backtest(const ingest::ReturnsPanel& panel, const BacktestConfig& cfg) {
  cfg.validate();
  const std::size_t needed = required_periods(cfg);
  if (panel.periods() < needed) {
    throw Error(ErrorCode::InsufficientHistory, "backtest needs " + std::to_string(needed) + " return periods, panel has " +
                                                    std::to_string(panel.periods()));
  }
  std::map<std::string, std::size_t> column_of;
  for (std::size_t j = 0; j < panel.num_assets(); ++j) column_of.emplace(panel.assets[j], j);

  std::vector<std::optional<detail::WindowOutcome>> outcomes(cfg.horizon);
  if (cfg.threads <= 1) {
    for (std::size_t h = 0; h < cfg.horizon; ++h) outcomes[h] = detail::evaluate_window(panel, cfg, column_of, h);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t h = next++; h < cfg.horizon; h = next++)
        outcomes[h] = detail::evaluate_window(panel, cfg, column_of, h);
    };
    std::vector<std::jthread> pool;
    const unsigned count = std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.horizon));
    for (unsigned i = 0; i < count; ++i) pool.emplace_back(worker);
  }

  BacktestReport report;
  report.config = cfg;
  std::vector<SignedOutcome> pairs1, pairs2;
  std::vector<std::size_t> target_rows;
  for (auto& outcome : outcomes) {
    if (auto* skipped = std::get_if<SkippedWindow>(&*outcome)) {
      report.skipped.push_back(std::move(*skipped));
      continue;
    }
    auto& w = std::get<WindowResult>(*outcome);
    for (std::size_t j = 0; j < w.realized.size(); ++j) {
      if (is_missing(w.realized[j])) continue;
      pairs1.push_back({w.forecast.signs_raw[j], w.realized[j]});
      pairs2.push_back({w.forecast.signs_normalized[j], w.realized[j]});
    }
    report.strategy1.returns.push_back(w.strategy1_return);
    report.strategy2.returns.push_back(w.strategy2_return);
    report.dates.push_back(w.forecast.target_date);
    target_rows.push_back(w.index * cfg.step + cfg.window_length);
    report.windows.push_back(std::move(w));
  }

  auto score = [](StrategyMetrics& m, const std::vector<SignedOutcome>& pairs) {
    for (const auto& p : pairs) {
      if (p.sign == 0) continue;
      ++m.trials;
      if (forecast::sign_of(p.realized) == p.sign) ++m.wins;
    }
    if (m.trials > 0) m.winning_probability = winning_probability(pairs);
  };
  score(report.strategy1, pairs1);
  score(report.strategy2, pairs2);
  finalize_sharpe(report.strategy1, cfg.periods_per_year, cfg.risk_free);
  finalize_sharpe(report.strategy2, cfg.periods_per_year, cfg.risk_free);
  report.buy_and_hold = buy_and_hold(panel, target_rows, cfg.periods_per_year, cfg.risk_free);
  return report;
}

// ------------------------------------------------------------ diagnostics --

struct Diagnostics {
  std::vector<std::string> dates;
  std::vector<std::size_t> k;
  std::vector<std::size_t> n_states;
  std::size_t ranks = 0;  // minimum state count across windows
  Matrix rank_means;      // windows x ranks
  Matrix rank_vars;
};

/// Factor/state count series plus the rank-ordered state means and variances
/// truncated to the smallest state count seen in any window.
inline Diagnostics diagnostics(const BacktestReport& report) {
  if (report.windows.empty()) throw Error(ErrorCode::EmptyReport, "report has no windows");
  Diagnostics d;
  d.ranks = report.windows.front().n_states;
  for (const auto& w : report.windows) d.ranks = std::min(d.ranks, w.n_states);
  d.rank_means = Matrix(report.windows.size(), d.ranks);
  d.rank_vars = Matrix(report.windows.size(), d.ranks);
  for (std::size_t i = 0; i < report.windows.size(); ++i) {
    const auto& w = report.windows[i];
    d.dates.push_back(w.forecast.target_date);
    d.k.push_back(w.k);
    d.n_states.push_back(w.n_states);
    for (std::size_t r = 0; r < d.ranks; ++r) {
      d.rank_means(i, r) = w.sorted_state_means[r];
      d.rank_vars(i, r) = w.sorted_state_vars[r];
    }
  }
  return d;
}

}  // namespace pcahmm::backtest
