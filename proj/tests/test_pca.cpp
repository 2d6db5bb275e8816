#include <gtest/gtest.h>

#include <cmath>

#include "pcahmm/oracle.hpp"
#include "pcahmm/pca.hpp"

using namespace pcahmm;
using namespace pcahmm::pca;

namespace {

ingest::ReturnsPanel panel_of(const Matrix& x) {
  ingest::ReturnsPanel r;
  r.returns = x;
  for (std::size_t t = 0; t < x.rows(); ++t) r.dates.push_back("d" + std::to_string(1000 + t));
  for (std::size_t j = 0; j < x.cols(); ++j) r.assets.push_back("S" + std::to_string(j));
  return r;
}

// Y with orthogonal columns of prescribed energy, so that the eigenvalue
// shares of YᵀY are exactly the given fractions.
Matrix matrix_with_shares(const Vector& shares) {
  Matrix y(shares.size(), shares.size());
  for (std::size_t i = 0; i < shares.size(); ++i) y(i, i) = std::sqrt(shares[i]);
  return y;
}

double residual_energy(const Matrix& y, const FactorModel& m) {
  const auto f = factor_returns(y, m);
  const Matrix rec = matmul(f.values, transpose(m.loadings));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    num += std::pow(y.data()[i] - rec.data()[i], 2);
    den += y.data()[i] * y.data()[i];
  }
  return num / den;
}

}  // namespace

TEST(Normalize, TwoPointColumn) {
  Matrix x = Matrix::from_rows({{0.01}, {-0.01}, {0.0}});
  const auto n = normalize(panel_of(x));
  EXPECT_NEAR(n.y(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(n.y(1, 0), -1.0, 1e-12);
  EXPECT_NEAR(n.stats.sigma[0], 0.01, 1e-15);
}

TEST(Normalize, SampleStdConventionOnEvenPair) {
  // Mean 0, sample std 0.01*sqrt(2) for (0.01, -0.01, 0.01, -0.01) -> ±0.866.
  const auto n = normalize(panel_of(Matrix::from_rows({{0.01}, {-0.01}, {0.01}, {-0.01}})));
  EXPECT_NEAR(n.y(0, 0), std::sqrt(0.75), 1e-12);
}

TEST(Normalize, ColumnsStandardized) {
  Rng rng(3);
  const auto n = normalize(panel_of(oracle::random_panel(50, 6, rng)));
  for (std::size_t j = 0; j < 6; ++j) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t t = 0; t < 50; ++t) mean += n.y(t, j);
    mean /= 50.0;
    for (std::size_t t = 0; t < 50; ++t) ss += std::pow(n.y(t, j) - mean, 2);
    EXPECT_LE(std::abs(mean), 1e-12);
    EXPECT_NEAR(std::sqrt(ss / 49.0), 1.0, 1e-9);
  }
}

TEST(Normalize, StandardizedInputUnchanged) {
  Rng rng(4);
  const auto once = normalize(panel_of(oracle::random_panel(30, 4, rng)));
  const auto twice = normalize(panel_of(once.y));
  for (std::size_t i = 0; i < once.y.data().size(); ++i) EXPECT_NEAR(once.y.data()[i], twice.y.data()[i], 1e-12);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(twice.stats.mu[j], 0.0, 1e-12);
    EXPECT_NEAR(twice.stats.sigma[j], 1.0, 1e-12);
  }
}

TEST(Normalize, ConstantColumnIsDegenerate) {
  auto panel = panel_of(Matrix::from_rows({{0.01, 0.02}, {0.03, 0.02}, {-0.01, 0.02}}));
  try {
    normalize(panel);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateColumn);
    EXPECT_NE(std::string(e.what()).find("S1"), std::string::npos);
  }
}

TEST(Normalize, RejectsMissingAndShortPanels) {
  EXPECT_THROW(normalize(panel_of(Matrix::from_rows({{0.01}, {kMissing}, {0.02}}))), Error);
  EXPECT_THROW(normalize(panel_of(Matrix::from_rows({{0.01}, {0.02}}))), Error);
}

TEST(FitFactorModel, SelectionRuleOnKnownShares) {
  const Matrix y = matrix_with_shares({0.5, 0.3, 0.15, 0.05});
  EXPECT_EQ(fit_factor_model(y, 0.45).k, 2u);
  EXPECT_EQ(fit_factor_model(y, 0.15).k, 3u);
  EXPECT_EQ(fit_factor_model(y, 0.0).k, 4u);
  EXPECT_NEAR(fit_factor_model(y, 0.45).explained_fraction, 0.8, 1e-12);
}

TEST(FitFactorModel, FullModelReconstructsExactly) {
  Rng rng(9);
  const Matrix y = normalize(panel_of(oracle::random_panel(40, 7, rng))).y;
  const auto m = fit_factor_model(y, 0.0);
  ASSERT_EQ(m.k, 7u);
  EXPECT_LE(std::sqrt(residual_energy(y, m)) * frobenius_norm(y), 1e-10);
}

TEST(FitFactorModel, RejectsBadNoiseFraction) {
  const Matrix y = matrix_with_shares({0.6, 0.4});
  EXPECT_THROW(fit_factor_model(y, 1.0), Error);
  EXPECT_THROW(fit_factor_model(y, -0.1), Error);
}

TEST(FitFactorModel, EnergyBudgetMinimalityAndMonotonicity) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix y = normalize(panel_of(oracle::random_panel(60, 12, rng))).y;
    std::size_t prev_k = 12;
    for (double p : {0.0, 0.1, 0.15, 0.3, 0.45, 0.7, 0.95}) {
      const auto m = fit_factor_model(y, p);
      EXPECT_LE(m.k, prev_k);
      prev_k = m.k;
      EXPECT_LE(residual_energy(y, m), p + 1e-9);
      EXPECT_GE(m.explained_fraction, 1.0 - p);
      double total = 0.0, without_last = 0.0;
      for (double l : m.eigenvalues) total += l;
      for (std::size_t i = 0; i + 1 < m.k; ++i) without_last += m.eigenvalues[i];
      if (m.k < 12) {
        EXPECT_LT(without_last / total, 1.0 - p);
      }
      const Matrix g = matmul(transpose(m.loadings), m.loadings);
      for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t j = 0; j < m.k; ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(FitFactorModel, ScaleInvariantSelection) {
  Rng rng(22);
  const Matrix y = normalize(panel_of(oracle::random_panel(50, 8, rng))).y;
  Matrix scaled = y;
  for (double& v : scaled.data()) v *= 3.0;
  const auto a = fit_factor_model(y, 0.3);
  const auto b = fit_factor_model(scaled, 0.3);
  ASSERT_EQ(a.k, b.k);
  for (std::size_t i = 0; i < a.loadings.data().size(); ++i)
    EXPECT_NEAR(a.loadings.data()[i], b.loadings.data()[i], 1e-9);
}

TEST(FactorReturns, IdentityCase) {
  const auto m = fit_factor_model(Matrix::from_rows({{2, 0}, {0, 1}}), 0.0);
  const auto f = factor_returns(Matrix::identity(2), m);
  EXPECT_EQ(f.values, Matrix::identity(2));
}

TEST(FactorReturns, ColumnsOrthogonalAndCentered) {
  Rng rng(12);
  const Matrix y = normalize(panel_of(oracle::random_panel(80, 10, rng))).y;
  const auto m = fit_factor_model(y, 0.15);
  const auto f = factor_returns(y, m);
  for (std::size_t a = 0; a < m.k; ++a) {
    const Vector ca = f.values.column(a);
    double mean = 0.0;
    for (double v : ca) mean += v;
    EXPECT_LE(std::abs(mean / 80.0), 1e-10);
    for (std::size_t b = a + 1; b < m.k; ++b) {
      const Vector cb = f.values.column(b);
      const double na = std::sqrt(dot(ca, ca)), nb = std::sqrt(dot(cb, cb));
      EXPECT_LE(std::abs(dot(ca, cb)), 1e-8 * na * nb);
    }
  }
}

TEST(FactorReturns, MatchesIndependentEigenOracle) {
  Rng rng(2024);
  Matrix y(20, 5);
  for (double& v : y.data()) v = rng.normal();
  const auto m = fit_factor_model(y, 0.3);
  const auto f = factor_returns(y, m);

  // Oracle: eigenvalues by Sturm bisection, eigenvectors by inverse iteration.
  const Matrix h = gram(y);
  const Vector lambdas = oracle::charpoly_eigenvalues(h);
  double total = 0.0;
  for (double l : lambdas) total += l;
  std::size_t k = 0;
  for (double cum = 0.0; k < lambdas.size() && cum < 0.7;) cum += lambdas[k++] / total;
  ASSERT_EQ(m.k, k);
  for (std::size_t c = 0; c < k; ++c) {
    const Vector u = oracle::inverse_iteration(h, lambdas[c]);
    for (std::size_t t = 0; t < 20; ++t) EXPECT_NEAR(f.values(t, c), dot(y.row(t), u), 1e-6);
  }
}

TEST(FactorReturns, DimensionMismatch) {
  const auto m = fit_factor_model(matrix_with_shares({0.6, 0.4}), 0.0);
  try {
    factor_returns(Matrix(3, 3), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(ReconstructAssets, ZeroFactorsGiveMeans) {
  Rng rng(31);
  const auto norm = normalize(panel_of(oracle::random_panel(30, 5, rng)));
  const auto m = fit_factor_model(norm, 0.3);
  const auto r = reconstruct_assets(Vector(m.k, 0.0), m);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(r.yhat[j], 0.0);
    EXPECT_EQ(r.xhat[j], norm.stats.mu[j]);
  }
}

TEST(ReconstructAssets, FullModelInvertsRows) {
  Rng rng(32);
  const Matrix x = oracle::random_panel(25, 6, rng);
  const auto norm = normalize(panel_of(x));
  const auto m = fit_factor_model(norm, 0.0);
  const auto f = factor_returns(norm.y, m);
  for (std::size_t t = 0; t < 25; ++t) {
    const auto r = reconstruct_assets(f.values.row(t), m);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(r.xhat[j], x(t, j), 1e-9);
  }
}

TEST(ReconstructAssets, TruncatedRoundTripIsOrthogonalProjection) {
  Rng rng(33);
  const auto norm = normalize(panel_of(oracle::random_panel(40, 8, rng)));
  const auto m = fit_factor_model(norm, 0.3);
  ASSERT_LT(m.k, 8u);
  const Matrix projector = matmul(m.loadings, transpose(m.loadings));
  for (std::size_t t = 0; t < 5; ++t) {
    const auto y = norm.y.row(t);
    Vector f(m.k);
    for (std::size_t c = 0; c < m.k; ++c)
      for (std::size_t j = 0; j < 8; ++j) f[c] += y[j] * m.loadings(j, c);
    const auto r = reconstruct_assets(f, m);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.yhat[i], dot(projector.row(i), y), 1e-12);
  }
}

TEST(ReconstructAssets, SingleAssetArithmetic) {
  FactorModel m;
  m.stats = {{0.001}, {0.02}};
  m.loadings = Matrix::from_rows({{1.0}});
  m.k = 1;
  const auto r = reconstruct_assets(Vector{0.5}, m);
  EXPECT_NEAR(r.xhat[0], 0.011, 1e-15);
  EXPECT_THROW(reconstruct_assets(Vector{0.5, 0.1}, m), Error);
}
