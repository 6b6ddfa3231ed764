#include "bayesmech/stats.hpp"

#include "bayesmech/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>

namespace bayesmech::stats {

MeanEstimate mean_and_se(const Vector& values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) fail(ErrorCode::too_few_samples, "need at least two values");
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

double chi_square_sf(double x, double k) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * k, 0.5 * x);
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

NormalityTest jarque_bera(const Vector& values) {
  if (values.size() < 8) fail(ErrorCode::too_few_samples, "need at least eight values");
  const auto n = static_cast<double>(values.size());
  const Eigen::ArrayXd c = values.array() - values.mean();
  const double m2 = c.square().mean();
  const double m3 = c.cube().mean();
  const double m4 = c.square().square().mean();
  const double skew = m3 / std::pow(m2, 1.5);
  const double kurt = m4 / (m2 * m2);
  const double jb = n / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
  return {jb, chi_square_sf(jb, 2.0)};
}

MardiaTest mardia(const Matrix& samples) {
  const Index n = samples.rows();
  const Index p = samples.cols();
  if (n < 8 * std::max<Index>(p, 1)) fail(ErrorCode::too_few_samples, "too few rows for Mardia");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Matrix c = samples.rowwise() - mean;
  const Matrix s = c.transpose() * c / static_cast<double>(n);
  const Matrix w = s.llt().matrixL().solve(c.transpose());  // whitened columns

  // b1 = n⁻² Σ_ij (zᵢᵀzⱼ)³, accumulated through third-order moment tensors
  // so the cost stays linear in n.
  double b1 = 0.0;
  for (Index a = 0; a < p; ++a) {
    for (Index b = 0; b < p; ++b) {
      for (Index g = 0; g < p; ++g) {
        const double m = (w.row(a).array() * w.row(b).array() * w.row(g).array()).mean();
        b1 += m * m;
      }
    }
  }
  const double b2 = w.colwise().squaredNorm().array().square().mean();

  const auto nn = static_cast<double>(n);
  const auto pp = static_cast<double>(p);
  MardiaTest out;
  out.skewness.statistic = nn * b1 / 6.0;
  out.skewness.p_value = chi_square_sf(out.skewness.statistic, pp * (pp + 1.0) * (pp + 2.0) / 6.0);
  out.kurtosis.statistic = (b2 - pp * (pp + 2.0)) / std::sqrt(8.0 * pp * (pp + 2.0) / nn);
  out.kurtosis.p_value = normal_two_sided(out.kurtosis.statistic);
  out.p_value = std::min(1.0, 2.0 * std::min(out.skewness.p_value, out.kurtosis.p_value));
  return out;
}

}  // namespace bayesmech::stats
