#pragma once

// Independent reference computations used by the test suites and by the
// `selftest` command. Nothing here calls the production eigensolver or HMM
// recursions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "pcahmm/hmm.hpp"
#include "pcahmm/random.hpp"

namespace pcahmm::oracle {

struct Tridiagonal {
  Vector diag;
  Vector off;  // length n-1
};

/// Householder reduction of a symmetric matrix to tridiagonal form; the
/// eigenvalues are preserved.
inline Tridiagonal householder_tridiagonal(Matrix a) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k + 1, k) > 0.0) alpha = -alpha;
    Vector v(n, 0.0);
    v[k + 1] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) continue;
    // A <- H A H with H = I - 2 v vᵀ / (vᵀv).
    Vector p(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) p[i] += a(i, j) * v[j];
    for (double& x : p) x *= 2.0 / vnorm2;
    double vp = 0.0;
    for (std::size_t i = 0; i < n; ++i) vp += v[i] * p[i];
    const double c = vp / vnorm2;
    for (std::size_t i = 0; i < n; ++i) p[i] -= c * v[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a(i, j) -= v[i] * p[j] + p[i] * v[j];
  }
  Tridiagonal t{Vector(n), Vector(n > 0 ? n - 1 : 0)};
  for (std::size_t i = 0; i < n; ++i) t.diag[i] = a(i, i);
  for (std::size_t i = 0; i + 1 < n; ++i) t.off[i] = a(i + 1, i);
  return t;
}

/// Number of eigenvalues strictly below x, from the sign changes of the
/// characteristic-polynomial Sturm sequence of the leading minors.
inline std::size_t sturm_count(const Tridiagonal& t, double x) {
  std::size_t count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < t.diag.size(); ++i) {
    const double b2 = i == 0 ? 0.0 : t.off[i - 1] * t.off[i - 1];
    q = t.diag[i] - x - (i == 0 ? 0.0 : b2 / q);
    if (q == 0.0) q = -std::numeric_limits<double>::min();
    if (q < 0.0) ++count;
  }
  return count;
}

/// Eigenvalues in non-increasing order by bisection on Sturm counts.
inline Vector charpoly_eigenvalues(const Matrix& m) {
  const Tridiagonal t = householder_tridiagonal(m);
  const std::size_t n = t.diag.size();
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(t.off[i - 1]);
    if (i + 1 < n) r += std::abs(t.off[i]);
    lo = std::min(lo, t.diag[i] - r);
    hi = std::max(hi, t.diag[i] + r);
  }
  const double pad = 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  lo -= pad;
  hi += pad;
  Vector ascending(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    // idx-th smallest eigenvalue: smallest x with sturm_count(x) > idx.
    double a = lo, b = hi;
    for (int it = 0; it < 200 && b - a > 0.0; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (sturm_count(t, mid) > idx) b = mid;
      else a = mid;
    }
    ascending[idx] = 0.5 * (a + b);
  }
  return Vector(ascending.rbegin(), ascending.rend());
}

/// Solves a x = b by Gaussian elimination with partial pivoting.
inline Vector gaussian_solve(Matrix a, Vector b) {
  const std::size_t n = a.rows();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      std::swap(b[c], b[piv]);
    }
    double d = a(c, c);
    if (d == 0.0) d = a(c, c) = 1e-300;
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / d;
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  Vector x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t j = r + 1; j < n; ++j) s -= a(r, j) * x[j];
    x[r] = s / a(r, r);
  }
  return x;
}

/// Unit eigenvector for an isolated eigenvalue by inverse iteration, with the
/// largest-magnitude entry made positive.
inline Vector inverse_iteration(const Matrix& m, double lambda) {
  const std::size_t n = m.rows();
  Matrix shifted = m;
  const double eps = 1e-10 * std::max(1.0, std::abs(lambda));
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= lambda + eps;
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.1 * static_cast<double>(i);
  for (int it = 0; it < 4; ++it) {
    x = gaussian_solve(shifted, x);
    double norm = 0.0;
    for (double v : x) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : x) v /= norm;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  if (x[best] < 0.0)
    for (double& v : x) v = -v;
  return x;
}

// ----------------------------------------------------------------- HMMs --

inline double normal_log_density(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2.0 * var);
}

/// Visits every state path of the given length in lexicographic order.
template <typename Fn>
void for_each_path(std::size_t states, std::size_t length, Fn&& fn) {
  std::vector<std::size_t> path(length, 0);
  while (true) {
    fn(static_cast<const std::vector<std::size_t>&>(path));
    std::size_t pos = length;
    while (pos > 0) {
      --pos;
      if (++path[pos] < states) break;
      path[pos] = 0;
      if (pos == 0) return;
    }
    if (length == 0) return;
  }
}

/// log P(path, obs) evaluated term by term in probability space per factor.
inline double joint_log_probability(const hmm::GaussianHmm& m, const Matrix& obs, const std::vector<std::size_t>& path) {
  double s = std::log(m.initial[path[0]]);
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (t > 0) s += std::log(m.trans(path[t - 1], path[t]));
    for (std::size_t d = 0; d < obs.cols(); ++d)
      s += normal_log_density(obs(t, d), m.means(path[t], d), m.variances(path[t], d));
  }
  return s;
}

/// log Σ_paths P(path, obs) by exhaustive enumeration.
inline double brute_force_log_likelihood(const hmm::GaussianHmm& m, const Matrix& obs) {
  std::vector<double> terms;
  for_each_path(m.n_states(), obs.rows(), [&](const auto& path) { terms.push_back(joint_log_probability(m, obs, path)); });
  const double mx = *std::max_element(terms.begin(), terms.end());
  long double s = 0.0L;
  for (double v : terms) s += std::exp(static_cast<long double>(v - mx));
  return mx + static_cast<double>(std::log(s));
}

struct BestPath {
  double log_probability = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> path;  // first maximizer in lexicographic order
};

inline BestPath brute_force_best_path(const hmm::GaussianHmm& m, const Matrix& obs) {
  BestPath best;
  for_each_path(m.n_states(), obs.rows(), [&](const auto& path) {
    const double lp = joint_log_probability(m, obs, path);
    if (lp > best.log_probability) {
      best.log_probability = lp;
      best.path = path;
    }
  });
  return best;
}

/// Random valid model: probabilities bounded away from zero, unit-scale means,
/// variances in [0.25, 2].
inline hmm::GaussianHmm random_hmm(std::size_t states, std::size_t dim, Rng& rng) {
  hmm::GaussianHmm m;
  auto simplex = [&](std::size_t n) {
    Vector p(n);
    double s = 0.0;
    for (double& v : p) s += (v = rng.uniform(0.05, 1.0));
    for (double& v : p) v /= s;
    return p;
  };
  m.initial = simplex(states);
  m.trans = Matrix(states, states);
  for (std::size_t i = 0; i < states; ++i) {
    const Vector row = simplex(states);
    std::copy(row.begin(), row.end(), m.trans.row(i).begin());
  }
  m.means = Matrix(states, dim);
  m.variances = Matrix(states, dim);
  for (std::size_t i = 0; i < states; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      m.means(i, d) = rng.normal(0.0, 1.0);
      m.variances(i, d) = rng.uniform(0.25, 2.0);
    }
  return m;
}

struct MonteCarloMean {
  Vector mean;
  Vector standard_error;
};

/// Simulates `draws` transitions out of `state` and averages the mean vector
/// of the state reached.
inline MonteCarloMean monte_carlo_next_mean(const hmm::GaussianHmm& m, std::size_t state, std::size_t draws,
                                            std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = m.dim();
  Vector sum(k, 0.0), sum_sq(k, 0.0);
  const auto row = m.trans.row(state);
  for (std::size_t i = 0; i < draws; ++i) {
    const std::size_t next = rng.categorical(row);
    for (std::size_t d = 0; d < k; ++d) {
      const double v = m.means(next, d);
      sum[d] += v;
      sum_sq[d] += v * v;
    }
  }
  MonteCarloMean out{Vector(k), Vector(k)};
  const double n = static_cast<double>(draws);
  for (std::size_t d = 0; d < k; ++d) {
    out.mean[d] = sum[d] / n;
    const double var = std::max(0.0, (sum_sq[d] - n * out.mean[d] * out.mean[d]) / (n - 1.0));
    out.standard_error[d] = std::sqrt(var / n);
  }
  return out;
}

/// Random symmetric matrix with entries uniform in [-1, 1].
inline Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
  return a;
}

/// Normal draws with column-specific scales, for panel tests.
inline Matrix random_panel(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix x(rows, cols);
  Vector scale(cols);
  for (double& s : scale) s = rng.uniform(0.5, 2.0);
  // Shared component so the spectrum is not flat.
  for (std::size_t t = 0; t < rows; ++t) {
    const double common = rng.normal();
    for (std::size_t j = 0; j < cols; ++j) x(t, j) = scale[j] * (0.7 * common + rng.normal());
  }
  return x;
}

}  // namespace pcahmm::oracle
