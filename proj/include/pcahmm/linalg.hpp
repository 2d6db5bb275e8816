#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pcahmm/matrix.hpp"

namespace pcahmm::linalg {

/// Symmetric matrix. Construction symmetrizes as (A + Aᵀ)/2 and rejects
/// non-finite entries.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& a) : m_(a.rows(), a.cols()) {
    if (a.rows() != a.cols() || a.rows() == 0) {
      throw Error(ErrorCode::InvalidMatrix, "symmetric matrix must be square with dim >= 1");
    }
    if (!all_finite(a.data())) throw Error(ErrorCode::InvalidMatrix, "non-finite entry");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) {
      m_(i, i) = a(i, i);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = 0.5 * (a(i, j) + a(j, i));
        m_(i, j) = v;
        m_(j, i) = v;
      }
    }
  }

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const noexcept { return m_; }

 private:
  Matrix m_;
};

struct EigenDecomposition {
  Vector eigenvalues;   // non-increasing
  Matrix eigenvectors;  // column i pairs with eigenvalues[i]
};

struct JacobiSettings {
  int max_sweeps = 100;
  double relative_tolerance = 1e-12;
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return std::sqrt(2.0 * s);
}

// Applies the plane rotation that zeroes a(p, q) to both sides of `a` and to
// rows p, q of `vt` (eigenvectors stored as rows).
inline void rotate(Matrix& a, Matrix& vt, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  double t;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();

  auto rp = a.row(p);
  auto rq = a.row(q);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = rp[k];
    const double y = rq[k];
    rp[k] = c * x - s * y;
    rq[k] = s * x + c * y;
  }
  for (std::size_t k = 0; k < n; ++k) {
    double& x = a(k, p);
    double& y = a(k, q);
    const double xo = x;
    const double yo = y;
    x = c * xo - s * yo;
    y = s * xo + c * yo;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;

  auto vp = vt.row(p);
  auto vq = vt.row(q);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = vp[k];
    const double y = vq[k];
    vp[k] = c * x - s * y;
    vq[k] = s * x + c * y;
  }
}

}  // namespace detail

/// Flips `v` so that its largest-magnitude entry is positive; ties go to the
/// lowest index.
inline void canonicalize_sign(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (!v.empty() && v[best] < 0.0)
    for (double& x : v) x = -x;
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back in non-increasing order (stable with respect to the
/// diagonal order at convergence) and each eigenvector is sign-normalized with
/// canonicalize_sign. Bit-reproducible for identical input.
inline EigenDecomposition sym_eig(const SymMatrix& m, const JacobiSettings& settings = {}) {
  const std::size_t n = m.dim();
  Matrix a = m.matrix();
  Matrix vt = Matrix::identity(n);
  const double tol = settings.relative_tolerance * frobenius_norm(a);

  bool converged = false;
  double off = detail::off_diagonal_norm(a);
  for (int sweep = 0; sweep <= settings.max_sweeps; ++sweep) {
    if (off <= tol) {
      converged = true;
      break;
    }
    if (sweep == settings.max_sweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) detail::rotate(a, vt, p, q);
    off = detail::off_diagonal_norm(a);
  }
  if (!converged) {
    throw Error(ErrorCode::ConvergenceFailure,
                "Jacobi did not converge; off-diagonal residual " + std::to_string(off));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  Vector v(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.eigenvalues[c] = a(src, src);
    std::copy(vt.row(src).begin(), vt.row(src).end(), v.begin());
    canonicalize_sign(v);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v[r];
  }
  return out;
}

}  // namespace pcahmm::linalg
