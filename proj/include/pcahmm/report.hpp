#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pcahmm/backtest.hpp"

namespace pcahmm::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string data_path;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  std::string input_hash;  // FNV-1a 64 over the data file then the config file
};

/// Shortest decimal text that parses back to the same double; "" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string hash_inputs(const std::string& data_path, const std::string& config_path) {
  std::uint64_t h = fnv1a(read_file(data_path));
  if (!config_path.empty()) h = fnv1a(read_file(config_path), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ----------------------------------------------------------------- config --

inline std::string to_string(hmm::AicPenalty p) { return p == hmm::AicPenalty::States ? "states" : "free_params"; }

inline hmm::AicPenalty parse_penalty(const std::string& s) {
  if (s == "states") return hmm::AicPenalty::States;
  if (s == "free_params") return hmm::AicPenalty::FreeParams;
  throw Error(ErrorCode::ConfigError, "aic_penalty must be 'states' or 'free_params', got '" + s + "'");
}

inline Json to_json(const backtest::BacktestConfig& c) {
  return Json{{"window_length", c.window_length},
              {"step", c.step},
              {"horizon", c.horizon},
              {"p", c.p},
              {"min_assets", c.min_assets},
              {"state_candidates", c.state_candidates},
              {"periods_per_year", c.periods_per_year},
              {"aic_penalty", to_string(c.aic_penalty)},
              {"em_tol", c.em.tol},
              {"em_max_iter", c.em.max_iter},
              {"risk_free", c.risk_free}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline backtest::BacktestConfig config_from_json(const Json& j, backtest::BacktestConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "window_length") base.window_length = value.get<std::size_t>();
      else if (key == "step") base.step = value.get<std::size_t>();
      else if (key == "horizon") base.horizon = value.get<std::size_t>();
      else if (key == "p") base.p = value.get<double>();
      else if (key == "min_assets") base.min_assets = value.get<std::size_t>();
      else if (key == "state_candidates") base.state_candidates = value.get<std::vector<std::size_t>>();
      else if (key == "periods_per_year") base.periods_per_year = value.get<std::size_t>();
      else if (key == "aic_penalty") base.aic_penalty = parse_penalty(value.get<std::string>());
      else if (key == "em_tol") base.em.tol = value.get<double>();
      else if (key == "em_max_iter") base.em.max_iter = value.get<int>();
      else if (key == "risk_free") base.risk_free = value.get<double>();
      else if (key == "threads") base.threads = value.get<unsigned>();
      else throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad config value: ") + e.what());
  }
  return base;
}

inline backtest::BacktestConfig load_config(const std::string& path, backtest::BacktestConfig base = {}) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return config_from_json(j, base);
}

// ---------------------------------------------------------------- records --

inline Json to_json(const RunManifest& m) {
  return Json{{"command", m.command},          {"config_path", m.config_path}, {"data_path", m.data_path},
              {"output_dir", m.output_dir},    {"tool_version", m.tool_version}, {"input_hash", m.input_hash}};
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

inline Json to_json(const hmm::AicEntry& e) {
  Json j{{"states", e.states}};
  j["log_likelihood"] = e.log_likelihood ? Json(*e.log_likelihood) : Json(nullptr);
  j["aic"] = e.aic ? Json(*e.aic) : Json(nullptr);
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

inline Json to_json(const forecast::ForecastRecord& r) {
  Json assets = Json::array();
  for (std::size_t j = 0; j < r.raw_forecast.size(); ++j) {
    assets.push_back(Json{{"ticker", j < r.assets.size() ? r.assets[j] : std::string()},
                          {"raw_forecast", r.raw_forecast[j]},
                          {"normalized_forecast", r.normalized_forecast[j]},
                          {"sign_raw", r.signs_raw[j]},
                          {"sign_normalized", r.signs_normalized[j]}});
  }
  return Json{{"as_of_date", r.as_of_date},
              {"target_date", r.target_date.empty() ? Json(nullptr) : Json(r.target_date)},
              {"current_state", r.current_state},
              {"factor_forecast", vector_json(r.factor_forecast)},
              {"assets", std::move(assets)}};
}

inline Json to_json(const backtest::WindowResult& w) {
  Json aic = Json::array();
  for (const auto& e : w.aic_table) aic.push_back(to_json(e));
  return Json{{"index", w.index},
              {"k", w.k},
              {"n_states", w.n_states},
              {"explained_fraction", w.explained_fraction},
              {"converged", w.converged},
              {"forecast", to_json(w.forecast)},
              {"realized", vector_json(w.realized)},
              {"weights_strategy1", vector_json(w.weights1)},
              {"weights_strategy2", vector_json(w.weights2)},
              {"strategy1_return", w.strategy1_return},
              {"strategy2_return", w.strategy2_return},
              {"sorted_state_means", vector_json(w.sorted_state_means)},
              {"sorted_state_vars", vector_json(w.sorted_state_vars)},
              {"aic_table", std::move(aic)}};
}

inline Json to_json(const backtest::StrategyMetrics& m) {
  Json j{{"winning_probability", m.winning_probability ? Json(*m.winning_probability) : Json(nullptr)},
         {"annualized_sharpe", m.sharpe ? Json(*m.sharpe) : Json(nullptr)},
         {"wins", m.wins},
         {"trials", m.trials},
         {"periods", m.returns.size()}};
  if (!m.sharpe_error.empty()) j["sharpe_error"] = m.sharpe_error;
  return j;
}

inline Json to_json(const backtest::BacktestReport& r, const RunManifest& manifest) {
  Json windows = Json::array();
  for (const auto& w : r.windows) windows.push_back(to_json(w));
  Json skipped = Json::array();
  for (const auto& s : r.skipped)
    skipped.push_back(Json{{"index", s.index}, {"target_date", s.target_date}, {"reason", s.reason}});
  return Json{{"manifest", to_json(manifest)},
              {"config", to_json(r.config)},
              {"metrics",
               {{"strategy1", to_json(r.strategy1)},
                {"strategy2", to_json(r.strategy2)},
                {"buy_and_hold", to_json(r.buy_and_hold)}}},
              {"series",
               {{"dates", r.dates},
                {"strategy1", vector_json(r.strategy1.returns)},
                {"strategy2", vector_json(r.strategy2.returns)},
                {"buy_and_hold", vector_json(r.buy_and_hold.returns)}}},
              {"windows", std::move(windows)},
              {"skipped", std::move(skipped)}};
}

// -------------------------------------------------------------------- csv --

inline void write_manifest_comment(std::ostream& out, const RunManifest& m) {
  out << "# manifest: " << to_json(m).dump() << '\n';
}

inline std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline void write_metrics_csv(std::ostream& out, const backtest::BacktestReport& r, const RunManifest& m) {
  write_manifest_comment(out, m);
  out << "strategy,p,winning_probability,annualized_sharpe,wins,trials,periods\n";
  auto line = [&](const char* name, const backtest::StrategyMetrics& s) {
    out << name << ',' << format_double(r.config.p) << ',' << optional_text(s.winning_probability) << ','
        << optional_text(s.sharpe) << ',' << s.wins << ',' << s.trials << ',' << s.returns.size() << '\n';
  };
  line("strategy1", r.strategy1);
  line("strategy2", r.strategy2);
  line("buy_and_hold", r.buy_and_hold);
}

inline void write_equity_csv(std::ostream& out, const backtest::BacktestReport& r, const RunManifest& m) {
  write_manifest_comment(out, m);
  out << "date,strategy1_return,strategy2_return,buy_and_hold_return,"
         "strategy1_cumulative,strategy2_cumulative,buy_and_hold_cumulative\n";
  for (std::size_t i = 0; i < r.dates.size(); ++i) {
    out << r.dates[i] << ',' << format_double(r.strategy1.returns[i]) << ',' << format_double(r.strategy2.returns[i])
        << ',' << format_double(r.buy_and_hold.returns[i]) << ',' << format_double(r.strategy1.cumulative[i]) << ','
        << format_double(r.strategy2.cumulative[i]) << ',' << format_double(r.buy_and_hold.cumulative[i]) << '\n';
  }
}

inline void write_diagnostics_csv(std::ostream& out, const backtest::BacktestReport& r, const RunManifest& m) {
  write_manifest_comment(out, m);
  if (r.windows.empty()) {
    out << "date,k,n_states\n";
    return;
  }
  const auto d = backtest::diagnostics(r);
  out << "date,k,n_states";
  for (std::size_t k = 0; k < d.ranks; ++k) out << ",mean_rank" << k + 1;
  for (std::size_t k = 0; k < d.ranks; ++k) out << ",var_rank" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < d.dates.size(); ++i) {
    out << d.dates[i] << ',' << d.k[i] << ',' << d.n_states[i];
    for (std::size_t k = 0; k < d.ranks; ++k) out << ',' << format_double(d.rank_means(i, k));
    for (std::size_t k = 0; k < d.ranks; ++k) out << ',' << format_double(d.rank_vars(i, k));
    out << '\n';
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

/// Writes report.json, metrics.csv, equity_curves.csv and diagnostics.csv.
inline void write_backtest_outputs(const std::filesystem::path& dir, const backtest::BacktestReport& r,
                                   const RunManifest& m) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
  write_text(dir / "report.json", to_json(r, m).dump(2) + "\n");
  std::ostringstream metrics, equity, diag;
  write_metrics_csv(metrics, r, m);
  write_equity_csv(equity, r, m);
  write_diagnostics_csv(diag, r, m);
  write_text(dir / "metrics.csv", metrics.str());
  write_text(dir / "equity_curves.csv", equity.str());
  write_text(dir / "diagnostics.csv", diag.str());
}

}  // namespace pcahmm::report
