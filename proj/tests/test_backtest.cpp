#include <gtest/gtest.h>

#include <cmath>

#include "pcahmm/backtest.hpp"
#include "pcahmm/synthetic.hpp"

using namespace pcahmm;
using namespace pcahmm::backtest;

namespace {

forecast::ForecastRecord record_with(std::vector<int> raw, std::vector<int> normalized) {
  forecast::ForecastRecord r;
  r.signs_raw = std::move(raw);
  r.signs_normalized = std::move(normalized);
  return r;
}

ingest::ReturnsPanel small_market(std::uint64_t seed) {
  synthetic::MarketSpec spec;
  spec.assets = 8;
  spec.periods = 160;
  return ingest::compute_returns(synthetic::regime_switching_market(spec, seed).prices);
}

BacktestConfig small_config() {
  BacktestConfig c;
  c.window_length = 120;
  c.horizon = 6;
  c.min_assets = 8;
  c.p = 0.3;
  c.state_candidates = {2, 3};
  return c;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ConfigError;
}

}  // namespace

TEST(Positions, EqualWeightBySign) {
  const auto rec = record_with({1, 1, -1, 1}, {1, 1, -1, 1});
  EXPECT_EQ(strategy_positions(Strategy::Raw, rec), (Vector{0.25, 0.25, -0.25, 0.25}));
  const auto longs = record_with({1, 1, 1}, {1, 1, 1});
  for (double w : strategy_positions(Strategy::Raw, longs)) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
}

TEST(Positions, ZeroSignsAndMaskedAssetsAreFlat) {
  const auto rec = record_with({1, 0, -1, 1}, {0, 0, 0, 0});
  EXPECT_EQ(strategy_positions(Strategy::Raw, rec), (Vector{1.0 / 3, 0.0, -1.0 / 3, 1.0 / 3}));
  const bool mask[] = {true, true, false, true};
  EXPECT_EQ(strategy_positions(Strategy::Raw, rec, mask), (Vector{0.5, 0.0, 0.0, 0.5}));
  EXPECT_EQ(code_of([&] { strategy_positions(Strategy::Normalized, rec); }), ErrorCode::NoPositions);
}

TEST(Positions, StrategiesDifferOnSignDisagreement) {
  const auto rec = record_with({1, 1}, {-1, 1});
  EXPECT_NE(strategy_positions(Strategy::Raw, rec), strategy_positions(Strategy::Normalized, rec));
}

TEST(Metrics, WinningProbability) {
  const SignedOutcome a[] = {{1, 0.01}, {1, -0.02}, {1, 0.03}};
  EXPECT_NEAR(winning_probability(a), 2.0 / 3.0, 1e-12);
  const SignedOutcome perfect[] = {{1, 0.01}, {-1, -0.02}, {1, 0.5}};
  EXPECT_EQ(winning_probability(perfect), 1.0);
  // Zero signs leave the denominator; zero realized returns are misses.
  const SignedOutcome mixed[] = {{0, 0.01}, {1, 0.0}, {-1, -0.01}, {0, -0.3}};
  EXPECT_EQ(winning_probability(mixed), 0.5);
  const SignedOutcome none[] = {{0, 0.01}};
  EXPECT_EQ(code_of([&] { winning_probability(none); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([] { winning_probability({}); }), ErrorCode::EmptyInput);
}

TEST(Metrics, SharpeHandValues) {
  const double three[] = {0.01, 0.03, -0.01};  // mean 0.01, sample sd 0.02
  EXPECT_NEAR(annualized_sharpe(three, 52), 0.5 * std::sqrt(52.0), 1e-12);
  const double ten[] = {0.012, -0.004, 0.021, 0.003, -0.011, 0.017, 0.008, -0.002, 0.015, 0.006};
  EXPECT_NEAR(annualized_sharpe(ten, 52), 4.6196978475777171979, 1e-12);
  EXPECT_NEAR(annualized_sharpe(ten, 52, 0.001), 3.9089751017965299367, 1e-12);
}

TEST(Metrics, SharpeErrors) {
  const double flat[] = {0.01, 0.01, 0.01, 0.01};
  EXPECT_EQ(code_of([&] { annualized_sharpe(flat, 52); }), ErrorCode::ZeroVolatility);
  const double one[] = {0.01};
  EXPECT_EQ(code_of([&] { annualized_sharpe(one, 52); }), ErrorCode::TooShort);
}

TEST(Metrics, CumulativeCompounds) {
  const double r[] = {0.1, -0.1, 0.05};
  const auto c = cumulative_returns(r);
  EXPECT_NEAR(c[0], 0.1, 1e-15);
  EXPECT_NEAR(c[1], 1.1 * 0.9 - 1.0, 1e-15);
  EXPECT_NEAR(c[2], 1.1 * 0.9 * 1.05 - 1.0, 1e-15);
}

TEST(Metrics, CoinFlipWinningProbabilityIsHalf) {
  Rng rng(99);
  std::vector<SignedOutcome> pairs(40000);
  for (auto& p : pairs) p = {rng.uniform() < 0.5 ? -1 : 1, rng.normal()};
  const double m = static_cast<double>(pairs.size());
  EXPECT_NEAR(winning_probability(pairs), 0.5, 3.0 / (2.0 * std::sqrt(m)));
}

TEST(BuyAndHold, EqualWeightMean) {
  ingest::ReturnsPanel p;
  p.dates = {"a", "b", "c"};
  p.assets = {"X", "Y"};
  p.returns = Matrix::from_rows({{0.02, 0.0}, {0.01, kMissing}, {-0.03, 0.01}});
  const std::size_t rows[] = {0, 1, 2};
  const auto m = buy_and_hold(p, rows);
  const Vector expected{0.01, 0.01, -0.01};
  ASSERT_EQ(m.returns.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m.returns[i], expected[i], 1e-15);
  EXPECT_EQ(m.trials, 5u);
  EXPECT_EQ(m.wins, 3u);
  ASSERT_TRUE(m.sharpe.has_value());
}

TEST(BuyAndHold, SingleAssetAndConstantPanel) {
  ingest::ReturnsPanel p;
  p.dates = {"a", "b", "c"};
  p.assets = {"X"};
  p.returns = Matrix::from_rows({{0.02}, {-0.01}, {0.04}});
  const std::size_t rows[] = {0, 1, 2};
  EXPECT_EQ(buy_and_hold(p, rows).returns, (Vector{0.02, -0.01, 0.04}));
  p.returns = Matrix(3, 1, 0.01);
  const auto flat = buy_and_hold(p, rows);
  EXPECT_FALSE(flat.sharpe.has_value());
  EXPECT_EQ(flat.sharpe_error, "ZeroVolatility");
}

TEST(Config, Validation) {
  BacktestConfig c;
  EXPECT_NO_THROW(c.validate());
  c.p = 1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = {};
  c.window_length = 2;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = {};
  c.horizon = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
}

TEST(RunBacktest, InsufficientHistory) {
  const auto panel = small_market(1);
  auto c = small_config();
  c.horizon = panel.periods() - c.window_length + 1;
  EXPECT_EQ(code_of([&] { run_backtest(panel, c); }), ErrorCode::InsufficientHistory);
  c.horizon = panel.periods() - c.window_length;
  EXPECT_EQ(required_periods(c), panel.periods());
}

TEST(RunBacktest, SingleWindowMatchesManualPipeline) {
  const auto panel = small_market(2);
  auto c = small_config();
  c.horizon = 1;
  const auto report = run_backtest(panel, c);
  ASSERT_EQ(report.windows.size(), 1u);
  const auto& w = report.windows[0];

  const auto window = ingest::window_view(panel, 0, c.window_length, c.min_assets);
  const auto fit = fit_window(window, c, panel.dates[c.window_length]);
  EXPECT_EQ(w.forecast.raw_forecast, fit.forecast.raw_forecast);
  EXPECT_EQ(w.k, fit.model.k);
  EXPECT_EQ(w.n_states, fit.selection.best.model.n_states());
  EXPECT_EQ(w.forecast.target_date, panel.dates[c.window_length]);
  EXPECT_EQ(w.forecast.as_of_date, panel.dates[c.window_length - 1]);
  const auto realized = panel.returns.row(c.window_length);
  EXPECT_EQ(w.realized, Vector(realized.begin(), realized.end()));
  EXPECT_EQ(w.weights1, strategy_positions(Strategy::Raw, fit.forecast));
  EXPECT_EQ(report.strategy1.returns, (Vector{w.strategy1_return}));
  EXPECT_FALSE(report.strategy1.sharpe.has_value());
  EXPECT_EQ(report.strategy1.sharpe_error, "TooShort");

  const auto d = diagnostics(report);
  EXPECT_EQ(d.dates.size(), 1u);
  EXPECT_EQ(d.rank_means.rows(), 1u);
  EXPECT_EQ(d.ranks, w.n_states);
}

TEST(RunBacktest, AccountingAndNoLookAhead) {
  const auto panel = small_market(3);
  const auto c = small_config();
  const auto report = run_backtest(panel, c);
  EXPECT_EQ(report.windows.size() + report.skipped.size(), c.horizon);
  for (const auto& w : report.windows) {
    EXPECT_LT(w.forecast.as_of_date, w.forecast.target_date);
    EXPECT_NEAR(w.strategy1_return, dot(w.weights1, w.realized), 1e-12);
    EXPECT_NEAR(w.strategy2_return, dot(w.weights2, w.realized), 1e-12);
    for (std::size_t r = 1; r < w.sorted_state_means.size(); ++r)
      EXPECT_GE(w.sorted_state_means[r - 1], w.sorted_state_means[r]);
  }
  EXPECT_EQ(report.strategy1.returns.size(), report.windows.size());
  EXPECT_EQ(report.buy_and_hold.returns.size(), report.windows.size());
}

TEST(RunBacktest, DeterministicAndThreadIndependent) {
  const auto panel = small_market(4);
  auto c = small_config();
  const auto a = run_backtest(panel, c);
  const auto b = run_backtest(panel, c);
  c.threads = 3;
  const auto par = run_backtest(panel, c);
  ASSERT_EQ(a.windows.size(), par.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    EXPECT_EQ(a.windows[i].forecast.raw_forecast, b.windows[i].forecast.raw_forecast);
    EXPECT_EQ(a.windows[i].forecast.raw_forecast, par.windows[i].forecast.raw_forecast);
    EXPECT_EQ(a.windows[i].sorted_state_means, par.windows[i].sorted_state_means);
  }
  EXPECT_EQ(a.strategy1.returns, par.strategy1.returns);
  EXPECT_EQ(a.strategy2.cumulative, par.strategy2.cumulative);
}

TEST(RunBacktest, FailedWindowsAreSkippedNotFatal) {
  auto panel = small_market(5);
  auto c = small_config();
  // A missing value in every column of the second window's last row leaves
  // too few complete assets there.
  for (std::size_t j = 0; j < panel.num_assets(); ++j) panel.returns(c.window_length, j) = kMissing;
  const auto report = run_backtest(panel, c);
  EXPECT_FALSE(report.skipped.empty());
  EXPECT_EQ(report.buy_and_hold.returns.front(), 0.0);
  EXPECT_NE(report.skipped.front().reason.find("InsufficientAssets"), std::string::npos);
  EXPECT_EQ(report.windows.size() + report.skipped.size(), c.horizon);
}

TEST(Diagnostics, TruncatesToMinimumStateCount) {
  BacktestReport r;
  const std::size_t counts[] = {3, 5, 4};
  for (std::size_t i = 0; i < 3; ++i) {
    WindowResult w;
    w.n_states = counts[i];
    w.k = 2;
    w.forecast.target_date = "d" + std::to_string(i);
    for (std::size_t s = 0; s < counts[i]; ++s) {
      w.sorted_state_means.push_back(1.0 - 0.1 * static_cast<double>(s));
      w.sorted_state_vars.push_back(0.01 * static_cast<double>(s + 1));
    }
    r.windows.push_back(w);
  }
  const auto d = diagnostics(r);
  EXPECT_EQ(d.ranks, 3u);
  EXPECT_EQ(d.rank_means.cols(), 3u);
  EXPECT_EQ(d.rank_means(1, 2), 0.8);
  EXPECT_EQ(d.n_states, (std::vector<std::size_t>{3, 5, 4}));
  EXPECT_EQ(code_of([] { diagnostics(BacktestReport{}); }), ErrorCode::EmptyReport);
}
