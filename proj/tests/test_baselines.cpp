#include <gtest/gtest.h>

#include <cmath>

#include "strkm/baselines.hpp"
#include "strkm/energy.hpp"
#include "test_support.hpp"

using namespace strkm;

TEST(PcaFit, NoisyLineKeepsOneComponent) {
  Rng rng(1);
  Matrix X(200, 2);
  for (std::size_t i = 0; i < 200; ++i) {
    const double t = rng.uniform(-1.0, 1.0);
    X(i, 0) = t + 0.01 * rng.normal();
    X(i, 1) = 2.0 * t + 0.01 * rng.normal();
  }
  const PcaModel pca = pca_fit(X);
  EXPECT_EQ(pca.components.cols(), 1u);
  EXPECT_NEAR(std::abs(pca.components(1, 0)), 2.0 / std::sqrt(5.0), 1e-3);
}

TEST(PcaFit, IsotropicGaussianKeepsAll) {
  Rng rng(2);
  const Matrix X = Matrix::gaussian(500, 3, rng);
  const PcaModel pca = pca_fit(X);
  EXPECT_EQ(pca.components.cols(), 3u);
  for (double f : pca.explained_fractions) EXPECT_NEAR(f, 1.0 / 3.0, 0.08);
}

TEST(PcaFit, KeptAndDroppedAgainstSpectrum) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const std::size_t d = 6;
    Matrix X = Matrix::gaussian(150, d, rng);
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) X(i, j) *= std::pow(0.3, static_cast<double>(j));
    const PcaModel pca = pca_fit(X);

    // spectrum from an independently assembled covariance
    Vector mean(d, 0.0);
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += X(i, j) / 150.0;
    Matrix C(d, d);
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) C(a, b) += (X(i, a) - mean[a]) * (X(i, b) - mean[b]) / 150.0;
    const auto eig = sym_eig(C);
    const double total = trace(C);
    const std::size_t k = pca.components.cols();
    for (std::size_t j = 0; j < d; ++j) {
      if (j < k) {
        EXPECT_GE(eig.values[j] / total, 0.02);
        EXPECT_NEAR(pca.explained_fractions[j], eig.values[j] / total, 1e-10);
      } else {
        EXPECT_LT(eig.values[j] / total, 0.02);
      }
    }
    const Matrix VtV = oracle::matmul(oracle::transpose(pca.components), pca.components);
    EXPECT_LE(oracle::max_abs_diff(VtV, Matrix::identity(k)), 1e-8);
    for (std::size_t j = 1; j < k; ++j) EXPECT_LE(pca.explained_fractions[j], pca.explained_fractions[j - 1]);
  }
}

TEST(PcaFit, NeedsTwoSamples) {
  EXPECT_THROW(pca_fit(Matrix{{1.0, 2.0}}), ValidationError);
}

TEST(PcaScore, ZeroOnMeanAndSpan) {
  Rng rng(3);
  Matrix X = Matrix::gaussian(100, 3, rng);
  for (std::size_t i = 0; i < 100; ++i) X(i, 2) *= 0.01;
  const PcaModel pca = pca_fit(X);
  ASSERT_EQ(pca.components.cols(), 2u);
  EXPECT_NEAR(pca_score(pca, pca.mean), 0.0, 1e-30);
  Vector x = pca.mean;
  axpy(1.7, pca.components.col(0), x);
  axpy(-0.4, pca.components.col(1), x);
  EXPECT_NEAR(pca_score(pca, x), 0.0, 1e-20);
  EXPECT_THROW(pca_score(pca, Vector{1.0}), ValidationError);
}

TEST(PcaScore, MatchesExplicitProjector) {
  Rng rng(4);
  Matrix X = Matrix::gaussian(80, 5, rng);
  for (std::size_t i = 0; i < 80; ++i) X(i, 4) *= 0.05;
  const PcaModel pca = pca_fit(X);
  for (int t = 0; t < 20; ++t) {
    Vector x(5);
    for (auto& v : x) v = rng.normal();
    EXPECT_NEAR(pca_score(pca, x), oracle::explicit_residual_sq(pca.components, x - pca.mean), 1e-10);
  }
}

TEST(PcaScore, RotationInvariant) {
  Rng rng(5);
  Matrix X = Matrix::gaussian(100, 3, rng);
  for (std::size_t i = 0; i < 100; ++i) X(i, 1) *= 0.1;
  const Matrix R = random_stiefel(3, 3, rng).matrix();
  const Matrix XR = oracle::matmul(X, R);
  const PcaModel a = pca_fit(X);
  const PcaModel b = pca_fit(XR);
  for (int t = 0; t < 10; ++t) {
    const Matrix q = Matrix::gaussian(1, 3, rng);
    const Matrix qr = oracle::matmul(q, R);
    EXPECT_NEAR(pca_score(a, q.row(0)), pca_score(b, qr.row(0)), 1e-9);
  }
}

TEST(PcaCrossOracle, IdentityEncoderKpcaEqualsPcaScore) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const std::size_t d = 3 + rng.below(8);
    const std::size_t n = 20 + rng.below(181);
    Matrix X = fixture::random_unit_data(rng, n, d);
    const PcaModel full = pca_fit(X, 0.0);
    const std::size_t m = 1 + rng.below(d - 1);

    StRkmModel model;
    Mlp id;
    id.layers.push_back({Matrix::identity(d), Vector(d, 0.0), Activation::Linear, kDefaultPReluSlope});
    model.encoder = id;
    model.decoder = id;
    model.U = StiefelPoint(full.components.left_cols(m));
    model.feature_mean = full.mean;

    PcaModel top = full;
    top.components = full.components.left_cols(m);
    for (int t = 0; t < 10; ++t) {
      Vector x(d);
      for (auto& v : x) v = rng.uniform();
      EXPECT_NEAR(energy(model, x, EnergyKind::KpcaError), pca_score(top, x), 1e-8);
    }
  }
}
