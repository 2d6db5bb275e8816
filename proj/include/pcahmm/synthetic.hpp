#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "pcahmm/hmm.hpp"
#include "pcahmm/ingest.hpp"
#include "pcahmm/random.hpp"

namespace pcahmm::synthetic {

struct HmmSample {
  std::vector<std::size_t> states;
  Matrix observations;
};

/// Draws a state path and diagonal-Gaussian observations from `model`.
inline HmmSample sample_hmm(const hmm::GaussianHmm& model, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  HmmSample s{std::vector<std::size_t>(length), Matrix(length, model.dim())};
  std::size_t state = rng.categorical(model.initial);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = rng.categorical(model.trans.row(state));
    s.states[t] = state;
    for (std::size_t d = 0; d < model.dim(); ++d)
      s.observations(t, d) = rng.normal(model.means(state, d), std::sqrt(model.variances(state, d)));
  }
  return s;
}

/// Two-state persistent chain with the given means and common standard
/// deviation in one dimension.
inline hmm::GaussianHmm two_state_model(double mean0, double mean1, double sd, double persistence) {
  hmm::GaussianHmm m;
  m.initial = {0.5, 0.5};
  m.trans = Matrix::from_rows({{persistence, 1.0 - persistence}, {1.0 - persistence, persistence}});
  m.means = Matrix::from_rows({{mean0}, {mean1}});
  m.variances = Matrix::from_rows({{sd * sd}, {sd * sd}});
  return m;
}

/// Asset returns driven by latent factors whose means switch with a hidden
/// Markov regime: r_t = B f_t + e_t, f_t ~ N(mu[z_t], factor_sd²).
struct MarketSpec {
  std::size_t assets = 20;
  std::size_t periods = 800;  // returns; prices have one more row
  Matrix regime_factor_means = Matrix::from_rows({{0.012, -0.006}, {-0.012, 0.006}});  // regimes x factors
  double persistence = 0.95;
  double factor_sd = 0.01;
  double idiosyncratic_sd = 0.01;
  std::string start_date = "2000-01-07";
};

struct Market {
  ingest::PricePanel prices;
  std::vector<std::size_t> regimes;
  Matrix loadings;  // assets x factors
};

namespace detail {

inline bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// Adds `days` to an ISO date.
inline std::string add_days(const std::string& iso, int days) {
  int y = std::stoi(iso.substr(0, 4)), m = std::stoi(iso.substr(5, 2)), d = std::stoi(iso.substr(8, 2));
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  d += days;
  while (true) {
    const int len = kDays[m - 1] + (m == 2 && leap(y) ? 1 : 0);
    if (d <= len) break;
    d -= len;
    if (++m > 12) {
      m = 1;
      ++y;
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

}  // namespace detail

/// Weekly price panel from a regime-switching factor market.
inline Market regime_switching_market(const MarketSpec& spec, std::uint64_t seed) {
  const std::size_t regimes = spec.regime_factor_means.rows();
  const std::size_t factors = spec.regime_factor_means.cols();
  Rng rng(seed);
  Market out;
  out.loadings = Matrix(spec.assets, factors);
  for (std::size_t j = 0; j < spec.assets; ++j) {
    out.loadings(j, 0) = rng.uniform(0.5, 1.5);
    for (std::size_t f = 1; f < factors; ++f) out.loadings(j, f) = rng.uniform(-1.0, 1.0);
  }

  Vector row(regimes, (1.0 - spec.persistence) / static_cast<double>(regimes - 1));
  std::size_t z = rng.categorical(Vector(regimes, 1.0));
  auto& p = out.prices;
  p.dates.push_back(spec.start_date);
  for (std::size_t j = 0; j < spec.assets; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "A%02zu", j + 1);
    p.assets.emplace_back(buf);
  }
  p.prices = Matrix(spec.periods + 1, spec.assets);
  for (std::size_t j = 0; j < spec.assets; ++j) p.prices(0, j) = 100.0;

  Vector f(factors);
  for (std::size_t t = 1; t <= spec.periods; ++t) {
    if (t > 1) {
      std::fill(row.begin(), row.end(), (1.0 - spec.persistence) / static_cast<double>(regimes - 1));
      row[z] = spec.persistence;
      z = rng.categorical(row);
    }
    out.regimes.push_back(z);
    for (std::size_t d = 0; d < factors; ++d) f[d] = rng.normal(spec.regime_factor_means(z, d), spec.factor_sd);
    p.dates.push_back(detail::add_days(p.dates.back(), 7));
    for (std::size_t j = 0; j < spec.assets; ++j) {
      double r = rng.normal(0.0, spec.idiosyncratic_sd);
      for (std::size_t d = 0; d < factors; ++d) r += out.loadings(j, d) * f[d];
      p.prices(t, j) = p.prices(t - 1, j) * (1.0 + r);
    }
  }
  return out;
}

}  // namespace pcahmm::synthetic
