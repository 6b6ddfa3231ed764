#pragma once

#include "bayesmech/linalg.hpp"

namespace bayesmech::stats {

struct MeanEstimate {
  double mean = 0.0;
  /// Standard error of the mean, s / √n.
  double se = 0.0;
};

MeanEstimate mean_and_se(const Vector& values);

/// Upper tail of the χ² distribution with k degrees of freedom.
double chi_square_sf(double x, double k);
/// Two-sided normal tail probability P(|Z| > |z|).
double normal_two_sided(double z);

struct NormalityTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Jarque-Bera test on a univariate sample: n/6 (S² + (K − 3)²/4) ~ χ²₂.
NormalityTest jarque_bera(const Vector& values);

struct MardiaTest {
  NormalityTest skewness;
  NormalityTest kurtosis;
  /// Bonferroni combination: 2 · min(p_skew, p_kurt), capped at 1.
  double p_value = 1.0;
};

/// Mardia's multivariate skewness and kurtosis tests on the rows of samples.
MardiaTest mardia(const Matrix& samples);

}  // namespace bayesmech::stats
