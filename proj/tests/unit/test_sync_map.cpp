#include "bayesmech/error.hpp"
#include "bayesmech/random.hpp"
#include "bayesmech/sync_map.hpp"

#include "unit/models.hpp"
#include "unit/oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace bayesmech;

namespace {

// Random blanket model drawn from one of three families: generic coupling,
// a rank-deficient Π_μb (sync map generically missing) or Π_ηb = 0 with a
// rank-deficient Π_μb (sync map present with a non-trivial kernel).
PrecisionModel random_model(std::uint64_t seed) {
  const Index de = 1 + static_cast<Index>(seed % 3);
  const Index db = 1 + static_cast<Index>((seed / 3) % 3);
  const Index dm = 1 + static_cast<Index>((seed / 7) % 3);
  const Partition part(de, db, dm);
  RandomModelOptions opt;
  switch (seed % 4) {
    case 1:
      opt.internal_blanket_rank = std::max<Index>(0, std::min(db, dm) - 1);
      break;
    case 2:
      opt.internal_blanket_rank = std::max<Index>(0, std::min(db, dm) - 1);
      opt.decouple_external = true;
      break;
    default:
      break;
  }
  return build_model(random_blanket_precision(part, seed, opt), part);
}

}  // namespace

TEST(SyncMap, ExampleIsIdentity) {
  const auto m = models::example_model();
  const auto s = build_sync_map(m);
  EXPECT_TRUE(s.exists);
  EXPECT_NEAR(s.matrix(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(s.precision_form(0, 0), 1.0, 1e-14);
  // Σ-form by hand: Σ_ηb Σ_μb⁻ = (−0.5)(−2).
  EXPECT_NEAR(m.covariance()(0, 1) / m.covariance()(2, 1), 1.0, 1e-14);
}

TEST(SyncMap, DecoupledBlocksGiveZeroMap) {
  Matrix p = Matrix::Identity(3, 3) * 2.0;
  const auto m = build_model(p, Partition(1, 1, 1));
  EXPECT_TRUE(exists_sync_map(m).exists);
  const auto s = build_sync_map(m);
  EXPECT_TRUE(s.exists);
  EXPECT_EQ(s.matrix.norm(), 0.0);
  EXPECT_EQ(s.rank_internal_blanket, 0);
}

TEST(SyncMap, ZeroInternalCouplingWithExternalCouplingFails) {
  Matrix p(3, 3);
  p << 2, 1, 0, 1, 2, 0, 0, 0, 2;
  const auto m = build_model(p, Partition(1, 1, 1));
  const auto e = exists_sync_map(m);
  EXPECT_FALSE(e.exists);
  EXPECT_NEAR(e.residual, 1.0, 1e-14);
}

TEST(SyncMap, RequiresBlanket) {
  Matrix p(3, 3);
  p << 2, 1, 0.5, 1, 2, 1, 0.5, 1, 2;
  const auto m = build_model(p, Partition(1, 1, 1));
  try {
    build_sync_map(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::blanket_required);
  }
}

TEST(SyncMap, RandomFullRankModelCommutes) {
  const Partition part(2, 2, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = build_model(random_blanket_precision(part, 1000 + seed), part);
    const auto s = build_sync_map(m);
    ASSERT_TRUE(s.exists);
    EXPECT_EQ(s.rank_internal_blanket, 2);
    Rng rng = make_rng(seed, 1);
    std::normal_distribution<double> z;
    for (int k = 0; k < 100; ++k) {
      const Vector b = Vector::NullaryExpr(2, [&] { return z(rng); });
      const auto e = expected_states(m, b);
      EXPECT_LE((s(e.internal) - e.external).norm(), 1e-8);
    }
  }
}

TEST(SyncMap, ExistsWithProbabilityOneWhenInternalDominates) {
  int count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Index db = 1 + static_cast<Index>(seed % 3);
    const Index dm = db + static_cast<Index>((seed / 3) % 2);
    const Partition part(1 + static_cast<Index>(seed % 2), db, dm);
    const auto m = build_model(random_blanket_precision(part, 5000 + seed), part);
    count += exists_sync_map(m).exists ? 1 : 0;
  }
  EXPECT_EQ(count, 100);
}

class KernelInclusionProperties : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(KernelInclusionProperties, ConditionsAgreeAndMapCommutes) {
  const auto m = random_model(GetParam());
  const auto iii = exists_sync_map_covariance(m);
  const auto iv = exists_sync_map(m);
  EXPECT_EQ(iii.exists, iv.exists) << "residuals " << iii.residual << " / " << iv.residual;

  const auto s = build_sync_map(m);
  EXPECT_EQ(s.exists, iv.exists);
  if (s.exists) {
    const Matrix sb = m.covariance_block(Block::blanket, Block::blanket);
    const Matrix mu_map = oracle::schur_mean_map(m.covariance_block(Block::internal, Block::blanket), sb);
    const Matrix eta_map = oracle::schur_mean_map(m.covariance_block(Block::external, Block::blanket), sb);
    EXPECT_LE((s.matrix * mu_map - eta_map).norm(), 1e-8);
    EXPECT_LE(s.form_disagreement, 1e-8);
  }
}

INSTANTIATE_TEST_SUITE_P(RandomModels, KernelInclusionProperties, ::testing::Range<std::uint64_t>(0, 200));

TEST(KernelInclusionProperties, FamiliesCoverBothOutcomes) {
  int exists = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) exists += exists_sync_map(random_model(seed)).exists;
  EXPECT_GT(exists, 20);
  EXPECT_LT(exists, 180);
}

TEST(EmpiricalSync, ExampleBinsAgree) {
  const auto m = models::example_model();
  const auto s = build_sync_map(m);
  const Matrix x = sample(m, 1'000'000, 2024);
  const auto check = empirical_sync_check(x, m.partition(), s);
  EXPECT_LE(check.max_abs_mismatch, 0.05);
  EXPECT_GT(check.bins.size(), 30u);
  for (const auto& bin : check.bins) EXPECT_GE(bin.count, 100);
}

TEST(EmpiricalSync, ViolatingModelShowsMismatch) {
  Matrix p(3, 3);
  p << 2, 1, 0, 1, 2, 0, 0, 0, 2;
  const auto m = build_model(p, Partition(1, 1, 1));
  const auto s = build_sync_map(m);
  const Matrix x = sample(m, 200'000, 3);
  const auto check = empirical_sync_check(x, m.partition(), s);
  EXPECT_GT(check.max_standardized_mismatch, 3.0);
}

TEST(EmpiricalSync, TwoBinsAreMirrorImages) {
  const auto m = models::example_model();
  const auto s = build_sync_map(m);
  const Matrix x = sample(m, 200'000, 8);
  SyncCheckOptions opt;
  opt.n_bins = 2;
  const auto check = empirical_sync_check(x, m.partition(), s, opt);
  ASSERT_EQ(check.bins.size(), 2u);
  const auto& a = check.bins[0];
  const auto& b = check.bins[1];
  const double se = std::hypot(a.se_eta(0), b.se_eta(0));
  EXPECT_LE(std::abs(a.eta_hat(0) + b.eta_hat(0)), 4.0 * se);
}

TEST(EmpiricalSync, RejectsMultiDimensionalBlanket) {
  const Partition part(1, 2, 1);
  const auto m = build_model(random_blanket_precision(part, 1), part);
  try {
    empirical_sync_check(sample(m, 1000, 1), part, build_sync_map(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_dimension);
  }
}

TEST(EmpiricalSync, CsvHeader) {
  const auto m = models::example_model();
  const auto check = empirical_sync_check(sample(m, 10'000, 1), m.partition(), build_sync_map(m),
                                          {.n_bins = 5, .min_count = 10});
  std::ostringstream os;
  write_sync_csv(os, check);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "bin_center,count,eta_hat_0,sigma_mu_hat_0,se_eta_0,se_diff_0");
}
