// pcahmm: rolling PCA + Gaussian HMM backtests, single forecasts and the
// oracle self-test.
//
// Exit codes: 0 ok, 1 self-test failure, 2 config/IO, 3 data, 4 numerical.
// Errors are reported on stderr as one JSON object.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include "pcahmm/backtest.hpp"
#include "pcahmm/report.hpp"
#include "pcahmm/selftest.hpp"

namespace {

using namespace pcahmm;
using report::Json;

struct CommonArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<double> p;
  std::optional<std::size_t> window;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> min_assets;
  std::optional<unsigned> threads;
};

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numerical: return 4;
  }
  return 4;
}

int report_error(const std::string& code, const char* category, const std::string& message, int status) {
  Json err{{"error", {{"code", code}, {"category", category}, {"message", message}, {"exit_code", status}}}};
  std::cerr << err.dump() << '\n';
  return status;
}

// Flags override the config file, which overrides the built-in defaults.
backtest::BacktestConfig resolve_config(const CommonArgs& a) {
  backtest::BacktestConfig cfg;
  if (!a.config.empty()) cfg = report::load_config(a.config, cfg);
  if (a.p) cfg.p = *a.p;
  if (a.window) cfg.window_length = *a.window;
  if (a.horizon) cfg.horizon = *a.horizon;
  if (a.min_assets) cfg.min_assets = *a.min_assets;
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();
  return cfg;
}

report::RunManifest manifest_for(const std::string& command, const CommonArgs& a) {
  report::RunManifest m;
  m.command = command;
  m.config_path = a.config;
  m.data_path = a.data;
  m.output_dir = a.out;
  m.input_hash = report::hash_inputs(a.data, a.config);
  return m;
}

int cmd_backtest(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const auto manifest = manifest_for("backtest", a);
  const auto returns = ingest::compute_returns(ingest::load_price_csv(a.data));
  const auto rep = backtest::run_backtest(returns, cfg);
  report::write_backtest_outputs(a.out, rep, manifest);

  auto wp = [](const backtest::StrategyMetrics& m) {
    return m.winning_probability ? report::format_double(*m.winning_probability) : std::string("n/a");
  };
  auto sr = [](const backtest::StrategyMetrics& m) {
    return m.sharpe ? report::format_double(*m.sharpe) : "n/a (" + m.sharpe_error + ")";
  };
  std::cout << "windows " << rep.windows.size() << ", skipped " << rep.skipped.size() << '\n'
            << "strategy1     wp " << wp(rep.strategy1) << "  sharpe " << sr(rep.strategy1) << '\n'
            << "strategy2     wp " << wp(rep.strategy2) << "  sharpe " << sr(rep.strategy2) << '\n'
            << "buy_and_hold  wp " << wp(rep.buy_and_hold) << "  sharpe " << sr(rep.buy_and_hold) << '\n'
            << "outputs written to " << a.out << '\n';
  return 0;
}

int cmd_forecast(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const auto manifest = manifest_for("forecast", a);
  const auto returns = ingest::compute_returns(ingest::load_price_csv(a.data));
  if (returns.periods() < cfg.window_length) {
    throw Error(ErrorCode::InsufficientHistory, "forecast needs " + std::to_string(cfg.window_length) +
                                                    " return periods, data has " + std::to_string(returns.periods()));
  }
  const auto window =
      ingest::window_view(returns, returns.periods() - cfg.window_length, cfg.window_length, cfg.min_assets);
  const auto fit = backtest::fit_window(window, cfg);
  const auto& rec = fit.forecast;

  Json aic = Json::array();
  for (const auto& e : fit.selection.table) aic.push_back(report::to_json(e));
  Json out{{"manifest", report::to_json(manifest)},
           {"config", report::to_json(cfg)},
           {"k", fit.model.k},
           {"n_states", fit.selection.best.model.n_states()},
           {"explained_fraction", fit.model.explained_fraction}};
  const Json record = report::to_json(rec);
  for (const auto& [key, value] : record.items()) out[key] = value;
  out["aic_table"] = std::move(aic);
  if (a.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    const std::filesystem::path path(a.out);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    report::write_text(path, out.dump(2) + "\n");
  }
  return 0;
}

int cmd_selftest(const std::string& filter, double tol_scale) {
  const auto results = selftest::run(filter, tol_scale);
  if (results.empty()) {
    return report_error("ConfigError", "config", "no self-test check matches filter '" + filter + "'", 2);
  }
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(26) << r.name << r.detail << "  ("
              << std::fixed << std::setprecision(2) << r.seconds << "s)\n";
    std::cout.unsetf(std::ios::fixed);
    if (!r.passed) ++failed;
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  if (failed == 0) return 0;
  for (const auto& r : results)
    if (!r.passed) std::cerr << "failed: " << r.name << '\n';
  return 1;
}

void add_pipeline_options(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON config; keys mirror the backtest settings");
  cmd->add_option("--data", a.data, "price CSV: date column then one column per asset")->required();
  cmd->add_option("--p", a.p, "noise fraction left out of the factor model, in [0, 1)");
  cmd->add_option("--window", a.window, "fitting window length in periods");
  cmd->add_option("--min-assets", a.min_assets, "minimum complete assets per window");
  cmd->add_option("--threads", a.threads, "worker threads for independent windows");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCA factor + Gaussian HMM return forecasting and backtesting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(report::kToolVersion));

  CommonArgs bt;
  auto* backtest_cmd = app.add_subcommand("backtest", "rolling-window backtest of both strategies");
  add_pipeline_options(backtest_cmd, bt);
  backtest_cmd->add_option("--out", bt.out, "output directory")->required();
  backtest_cmd->add_option("--horizon", bt.horizon, "number of one-step forecasts");

  CommonArgs fc;
  auto* forecast_cmd = app.add_subcommand("forecast", "forecast the period after the data ends");
  add_pipeline_options(forecast_cmd, fc);
  forecast_cmd->add_option("--out", fc.out, "output JSON file (stdout when omitted)");

  std::string filter;
  double tol_scale = 1.0;
  auto* selftest_cmd = app.add_subcommand("selftest", "run the oracle checks");
  selftest_cmd->add_option("--filter", filter, "only checks whose name starts with this, e.g. hmm");
  selftest_cmd->add_option("--tolerance-scale", tol_scale, "multiply every check tolerance")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("ConfigError", "config", e.what(), 2);
  }

  try {
    if (*backtest_cmd) return cmd_backtest(bt);
    if (*forecast_cmd) return cmd_forecast(fc);
    return cmd_selftest(filter, tol_scale);
  } catch (const Error& e) {
    const int status = exit_code(e.category());
    return report_error(std::string(to_string(e.code())), to_string(e.category()), e.what(), status);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("IoError", "config", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("InternalError", "numerical", e.what(), 4);
  }
}
