#include "bayesmech/gaussian.hpp"
#include "bayesmech/random.hpp"
#include "bayesmech/stats.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bayesmech;

TEST(Stats, MeanAndStandardError) {
  Vector v(4);
  v << 1, 2, 3, 4;
  const auto e = stats::mean_and_se(v);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(Stats, ChiSquareTailKnownValues) {
  // k = 2 is exponential: P(X > x) = exp(−x/2).
  EXPECT_NEAR(stats::chi_square_sf(3.0, 2.0), std::exp(-1.5), 1e-14);
  EXPECT_NEAR(stats::chi_square_sf(3.841458820694124, 1.0), 0.05, 1e-10);
  EXPECT_NEAR(stats::normal_two_sided(1.959963984540054), 0.05, 1e-12);
}

TEST(Stats, JarqueBeraAcceptsGaussianRejectsExponential) {
  Rng rng = make_rng(1, 0);
  std::normal_distribution<double> z;
  std::exponential_distribution<double> ex;
  Vector g = Vector::NullaryExpr(20'000, [&] { return z(rng); });
  Vector e = Vector::NullaryExpr(20'000, [&] { return ex(rng); });
  EXPECT_GT(stats::jarque_bera(g).p_value, 0.001);
  EXPECT_LT(stats::jarque_bera(e).p_value, 1e-10);
}

TEST(Stats, MardiaAcceptsGaussianRejectsProductOfNormals) {
  Matrix cov(2, 2);
  cov << 1, 0.6, 0.6, 2;
  const Matrix g = sample_gaussian(cov, 50'000, 2);
  EXPECT_GT(stats::mardia(g).p_value, 0.001);

  // (z1, z1·z2) has Gaussian-looking symmetry but heavy kurtosis.
  Rng rng = make_rng(3, 0);
  std::normal_distribution<double> z;
  Matrix h(50'000, 2);
  for (Index i = 0; i < h.rows(); ++i) {
    const double a = z(rng), b = z(rng);
    h(i, 0) = a;
    h(i, 1) = a * b;
  }
  EXPECT_LT(stats::mardia(h).p_value, 1e-6);
}

TEST(Stats, MardiaSkewnessMatchesPairwiseDefinition) {
  const Matrix x = sample_gaussian(Matrix::Identity(2, 2), 300, 9);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix c = x.rowwise() - mean;
  const Matrix s = c.transpose() * c / 300.0;
  const Matrix g = c * s.inverse() * c.transpose();
  const double b1 = g.array().cube().sum() / (300.0 * 300.0);
  const double b2 = g.diagonal().array().square().mean();
  const auto t = stats::mardia(x);
  EXPECT_NEAR(t.skewness.statistic, 300.0 * b1 / 6.0, 1e-9);
  EXPECT_NEAR(t.kurtosis.statistic, (b2 - 8.0) / std::sqrt(64.0 / 300.0), 1e-9);
}
