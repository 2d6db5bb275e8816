#pragma once

// Oracle checks shared by the `selftest` command and the acceptance runner.
// Each check takes its sample sizes explicitly; `tol_scale` multiplies every
// tolerance so a harness can deliberately tighten them.

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pcahmm/forecast.hpp"
#include "pcahmm/linalg.hpp"
#include "pcahmm/oracle.hpp"
#include "pcahmm/pca.hpp"
#include "pcahmm/synthetic.hpp"

namespace pcahmm::selftest {

struct Outcome {
  bool passed = true;
  std::string detail;
};

struct CheckResult {
  std::string name;  // module.check
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

inline Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.5) {
  Matrix o(rows, cols);
  for (double& v : o.data()) v = rng.normal(0.0, sd);
  return o;
}

inline double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data()) r = std::max(r, std::abs(v));
  return r;
}

}  // namespace detail

// ----------------------------------------------------------------- linalg --

/// Jacobi eigenvalues against Sturm-bisection roots of the characteristic
/// polynomial; eigenvectors orthonormal and reconstructing the input.
inline Outcome eigen_vs_charpoly(std::size_t matrices, std::size_t max_n, std::uint64_t seed, double tol_scale = 1.0) {
  Rng rng(seed);
  double worst_eig = 0.0, worst_rec = 0.0;
  for (std::size_t r = 0; r < matrices; ++r) {
    const std::size_t n = 1 + r % max_n;
    const Matrix a = oracle::random_symmetric(n, rng);
    const auto e = linalg::sym_eig(linalg::SymMatrix(a));
    const auto ref = oracle::charpoly_eigenvalues(a);
    for (std::size_t i = 0; i < n; ++i) worst_eig = std::max(worst_eig, std::abs(e.eigenvalues[i] - ref[i]));
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = e.eigenvalues[i];
    const Matrix rec = matmul(matmul(e.eigenvectors, d), transpose(e.eigenvectors));
    Matrix diff = rec;
    for (std::size_t i = 0; i < diff.data().size(); ++i) diff.data()[i] -= a.data()[i];
    worst_rec = std::max(worst_rec, frobenius_norm(diff) / std::max(frobenius_norm(a), 1e-300));
  }
  const bool ok = worst_eig <= 1e-8 * tol_scale && worst_rec <= 1e-10 * tol_scale;
  return {ok, "max |dlambda| " + detail::fmt(worst_eig) + ", max reconstruction " + detail::fmt(worst_rec)};
}

/// Relative reconstruction residual and orthonormality over one random
/// symmetric matrix per entry of `sizes`.
inline Outcome eigen_reconstruction(const std::vector<std::size_t>& sizes, std::uint64_t seed, double tol_scale = 1.0) {
  Rng rng(seed);
  double worst_rec = 0.0, worst_orth = 0.0;
  for (std::size_t m : sizes) {
    const Matrix a = oracle::random_symmetric(m, rng);
    const auto e = linalg::sym_eig(linalg::SymMatrix(a));
    const Matrix& v = e.eigenvectors;
    // A V - V diag(lambda), column by column.
    Matrix av = matmul(a, v);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) av(i, j) -= v(i, j) * e.eigenvalues[j];
    worst_rec = std::max(worst_rec, frobenius_norm(av) / std::max(frobenius_norm(a), 1e-300));
    Matrix g = gram(v);
    for (std::size_t i = 0; i < m; ++i) g(i, i) -= 1.0;
    worst_orth = std::max(worst_orth, detail::max_abs(g));
  }
  const bool ok = worst_rec <= 1e-10 * tol_scale && worst_orth <= 1e-10 * tol_scale;
  return {ok, "max residual " + detail::fmt(worst_rec) + ", max orthonormality error " + detail::fmt(worst_orth)};
}

// -------------------------------------------------------------------- pca --

/// For each p: residual energy of the truncation is at most p, and one factor
/// fewer would exceed p. p = 0 reconstructs exactly.
inline Outcome energy_budget(std::size_t panels, const std::vector<double>& grid, std::uint64_t seed,
                             double tol_scale = 1.0) {
  Rng rng(seed);
  std::size_t violations = 0;
  double worst_exact = 0.0;
  for (std::size_t r = 0; r < panels; ++r) {
    const std::size_t n = 3 + r % 12;
    const std::size_t t = n + 5 + r % 30;
    const Matrix y = oracle::random_panel(t, n, rng);
    const double total = frobenius_norm(y) * frobenius_norm(y);
    auto residual = [&](const pca::FactorModel& m) {
      const auto f = pca::factor_returns(y, m);
      Matrix rec = matmul(f.values, transpose(m.loadings));
      for (std::size_t i = 0; i < rec.data().size(); ++i) rec.data()[i] -= y.data()[i];
      const double fr = frobenius_norm(rec);
      return fr * fr / total;
    };
    for (double p : grid) {
      const auto m = pca::fit_factor_model(y, p);
      if (residual(m) > p + 1e-9 * tol_scale) ++violations;
      if (m.k > 1) {
        // Minimality: energy left out by k-1 factors exceeds p.
        double kept = 0.0, all = 0.0;
        for (std::size_t i = 0; i < m.eigenvalues.size(); ++i) {
          all += m.eigenvalues[i];
          if (i + 1 < m.k) kept += m.eigenvalues[i];
        }
        if (1.0 - kept / all <= p) ++violations;
      }
    }
    const auto full = pca::fit_factor_model(y, 0.0);
    if (full.k != n) ++violations;
    worst_exact = std::max(worst_exact, std::sqrt(residual(full)));
  }
  const bool ok = violations == 0 && worst_exact <= 1e-10 * tol_scale;
  return {ok, std::to_string(violations) + " budget/minimality violations, p=0 residual " + detail::fmt(worst_exact)};
}

// -------------------------------------------------------------------- hmm --

/// Forward log-likelihood against exhaustive path enumeration on every
/// (N, T) in {1..max_states} x {1..max_len}.
inline Outcome forward_bruteforce(std::size_t models, std::size_t max_states, std::size_t max_len, std::uint64_t seed,
                                  double tol_scale = 1.0) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t n = 1; n <= max_states; ++n)
    for (std::size_t len = 1; len <= max_len; ++len)
      for (std::size_t r = 0; r < models; ++r) {
        const auto m = oracle::random_hmm(n, 1 + r % 2, rng);
        const Matrix o = detail::normal_matrix(len, m.dim(), rng);
        const double ref = oracle::brute_force_log_likelihood(m, o);
        const double got = hmm::log_forward(m, hmm::ObservationSeq(o));
        worst = std::max(worst, std::abs(got - ref) / std::max(std::abs(ref), 1e-300));
      }
  return {worst <= 1e-12 * tol_scale, "max relative error " + detail::fmt(worst)};
}

/// Viterbi path probability equals the exhaustive maximum; the path itself
/// matches whenever the maximizer is unique, and exact ties resolve to lower
/// state indices.
inline Outcome viterbi_bruteforce(std::size_t models, std::size_t max_states, std::size_t max_len, std::uint64_t seed,
                                  double tol_scale = 1.0) {
  Rng rng(seed);
  double worst = 0.0;
  std::size_t path_mismatch = 0;
  for (std::size_t n = 1; n <= max_states; ++n)
    for (std::size_t len = 1; len <= max_len; ++len)
      for (std::size_t r = 0; r < models; ++r) {
        const auto m = oracle::random_hmm(n, 1 + r % 2, rng);
        const Matrix o = detail::normal_matrix(len, m.dim(), rng);
        const auto best = oracle::brute_force_best_path(m, o);
        const auto path = hmm::viterbi(m, hmm::ObservationSeq(o));
        const double lp = oracle::joint_log_probability(m, o, path);
        worst = std::max(worst, std::abs(lp - best.log_probability) / std::max(std::abs(best.log_probability), 1e-300));
        if (path != best.path && std::abs(lp - best.log_probability) > 1e-9) ++path_mismatch;
      }
  // Identical states make every path tie; the documented winner is all zeros.
  hmm::GaussianHmm tie;
  tie.initial = {0.5, 0.5};
  tie.trans = Matrix(2, 2, 0.5);
  tie.means = Matrix::from_rows({{0.0}, {0.0}});
  tie.variances = Matrix::from_rows({{1.0}, {1.0}});
  const auto tie_path = hmm::viterbi(tie, hmm::ObservationSeq(Matrix::from_rows({{0.3}, {-1.0}, {2.0}})));
  if (tie_path != std::vector<std::size_t>{0, 0, 0}) ++path_mismatch;
  return {worst <= 1e-12 * tol_scale && path_mismatch == 0,
          "max relative error " + detail::fmt(worst) + ", " + std::to_string(path_mismatch) + " path mismatches"};
}

/// Every Baum-Welch log-likelihood trace is non-decreasing within `slack`.
inline Outcome em_monotone(std::size_t fits, std::uint64_t seed, double tol_scale = 1.0) {
  Rng rng(seed);
  const double slack = 1e-9 * tol_scale;
  double worst_drop = 0.0;
  std::size_t violations = 0;
  for (std::size_t r = 0; r < fits; ++r) {
    const std::size_t states = 2 + r % 3;
    const std::size_t dim = 1 + r % 3;
    const auto truth = oracle::random_hmm(states, dim, rng);
    const auto sample = synthetic::sample_hmm(truth, 60 + 20 * (r % 5), seed * 1000 + r);
    hmm::EmSettings s;
    s.max_iter = 50;
    const auto fit = hmm::baum_welch(hmm::ObservationSeq(sample.observations), states, s);
    for (std::size_t i = 1; i < fit.ll_trace.size(); ++i) {
      const double drop = fit.ll_trace[i - 1] - fit.ll_trace[i];
      worst_drop = std::max(worst_drop, drop);
      if (drop > slack) ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " decreases, largest drop " + detail::fmt(worst_drop)};
}

struct RecoveryResult {
  std::size_t recovered = 0;
  std::size_t selected_two = 0;
  std::size_t seeds = 0;
};

/// Refits a persistent 2-state chain (means +-0.05, sd 0.01, persistence
/// 0.95) per seed. Recovery: means within 10% relative and transition
/// diagonals within 0.05, up to label swap. Selection: AIC over 2..8 states
/// picks 2 (skipped when `select` is false).
inline RecoveryResult synthetic_recovery(std::size_t seeds, std::size_t length, std::uint64_t seed0, bool select,
                                         double tol_scale = 1.0) {
  const auto truth = synthetic::two_state_model(0.05, -0.05, 0.01, 0.95);
  RecoveryResult out;
  out.seeds = seeds;
  for (std::size_t s = 0; s < seeds; ++s) {
    const hmm::ObservationSeq obs(synthetic::sample_hmm(truth, length, seed0 + s).observations);
    const auto fit = hmm::baum_welch(obs, 2);
    const auto& m = fit.model;
    const std::size_t hi = m.means(0, 0) >= m.means(1, 0) ? 0 : 1;
    const std::size_t lo = 1 - hi;
    const bool means_ok = std::abs(m.means(hi, 0) - 0.05) <= 0.1 * 0.05 * tol_scale &&
                          std::abs(m.means(lo, 0) + 0.05) <= 0.1 * 0.05 * tol_scale;
    const bool trans_ok = std::abs(m.trans(hi, hi) - 0.95) <= 0.05 * tol_scale &&
                          std::abs(m.trans(lo, lo) - 0.95) <= 0.05 * tol_scale;
    if (means_ok && trans_ok) ++out.recovered;
    if (select && hmm::select_model(obs, hmm::default_state_candidates()).best.model.n_states() == 2)
      ++out.selected_two;
  }
  return out;
}

// --------------------------------------------------------------- forecast --

/// Closed-form next-period factor mean against simulated transitions, within
/// three standard errors per dimension.
inline Outcome forecast_monte_carlo(std::size_t models, std::size_t draws, std::uint64_t seed, double tol_scale = 1.0) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t r = 0; r < models; ++r) {
    const auto m = oracle::random_hmm(2 + r % 4, 1 + r % 3, rng);
    const std::size_t state = r % m.n_states();
    const auto f = forecast::expected_next(m, state);
    const auto mc = oracle::monte_carlo_next_mean(m, state, draws, seed * 7919 + r);
    for (std::size_t d = 0; d < f.size(); ++d) {
      const double z = mc.standard_error[d] > 0.0 ? std::abs(mc.mean[d] - f[d]) / mc.standard_error[d]
                                                  : (mc.mean[d] == f[d] ? 0.0 : HUGE_VAL);
      worst = std::max(worst, z);
    }
  }
  return {worst <= 3.0 * tol_scale, "largest deviation " + detail::fmt(worst) + " standard errors"};
}

// ------------------------------------------------------------------ suite --

struct Check {
  std::string name;
  std::function<Outcome(double)> run;
};

/// The quick oracle suite run by `selftest`.
inline std::vector<Check> default_checks() {
  return {
      {"linalg.charpoly", [](double s) { return eigen_vs_charpoly(30, 12, 101, s); }},
      {"linalg.reconstruction",
       [](double s) {
         std::vector<std::size_t> sizes;
         for (std::size_t n = 1; n <= 40; n += 2) sizes.push_back(n);
         return eigen_reconstruction(sizes, 102, s);
       }},
      {"pca.energy_budget", [](double s) { return energy_budget(20, {0.45, 0.30, 0.15, 0.10}, 103, s); }},
      {"hmm.forward_bruteforce", [](double s) { return forward_bruteforce(5, 3, 6, 104, s); }},
      {"hmm.viterbi_bruteforce", [](double s) { return viterbi_bruteforce(5, 3, 6, 105, s); }},
      {"hmm.em_monotone", [](double s) { return em_monotone(20, 106, s); }},
      {"hmm.synthetic_recovery",
       [](double s) {
         const auto r = synthetic_recovery(3, 5000, 107, false, s);
         return Outcome{r.recovered == r.seeds,
                        std::to_string(r.recovered) + "/" + std::to_string(r.seeds) + " seeds recovered"};
       }},
      {"forecast.monte_carlo", [](double s) { return forecast_monte_carlo(5, 200000, 108, s); }},
  };
}

/// Runs the checks whose name starts with `filter` (all when empty). A check
/// that throws counts as failed.
inline std::vector<CheckResult> run(const std::string& filter = {}, double tol_scale = 1.0) {
  std::vector<CheckResult> results;
  for (const auto& check : default_checks()) {
    if (!filter.empty() && check.name.rfind(filter, 0) != 0) continue;
    CheckResult r{check.name, false, {}, 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Outcome o = check.run(tol_scale);
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace pcahmm::selftest
