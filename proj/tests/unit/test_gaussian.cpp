#include "bayesmech/error.hpp"
#include "bayesmech/gaussian.hpp"

#include "unit/models.hpp"
#include "unit/oracles.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace bayesmech;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::internal_consistency;
}

const Block kEtaB[] = {Block::external, Block::blanket};
const Block kBMu[] = {Block::blanket, Block::internal};
const Block kEtaMu[] = {Block::external, Block::internal};

}  // namespace

TEST(BuildModel, ExampleCovarianceMatchesAdjugate) {
  const auto m = models::example_model();
  EXPECT_TRUE(m.has_blanket());
  const Eigen::Matrix3d p = models::example_precision();
  const Matrix adj = oracle::adjugate_inverse(p);
  Matrix quarter(3, 3);
  quarter << 3, -2, 1, -2, 4, -2, 1, -2, 3;
  quarter /= 4.0;
  EXPECT_LE((adj - quarter).norm(), 1e-15);
  EXPECT_LE((m.covariance() - adj).norm(), 1e-14);
  EXPECT_LE(m.inverse_residual(), 1e-10);
}

TEST(BuildModel, IdentityHasBlanket) {
  const auto m = build_model(Matrix::Identity(3, 3), Partition(1, 1, 1));
  EXPECT_TRUE(m.has_blanket());
  EXPECT_LE((m.covariance() - Matrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(BuildModel, CoupledExternalInternalHasNoBlanket) {
  Matrix p(3, 3);
  p << 2, 1, 0.5, 1, 2, 1, 0.5, 1, 2;
  const auto m = build_model(p, Partition(1, 1, 1));
  EXPECT_FALSE(m.has_blanket());
  EXPECT_DOUBLE_EQ(m.blanket_violation(), 0.5);
}

TEST(BuildModel, RejectsInvalidInput) {
  Matrix asym = models::example_precision();
  asym(0, 1) = 1.1;
  EXPECT_EQ(code_of([&] { build_model(asym, Partition(1, 1, 1)); }), ErrorCode::not_symmetric);
  Matrix indef = models::example_precision();
  indef(1, 1) = -1;
  EXPECT_EQ(code_of([&] { build_model(indef, Partition(1, 1, 1)); }),
            ErrorCode::not_positive_definite);
  EXPECT_EQ(code_of([&] { build_model(models::example_precision(), Partition(1, 1, 2)); }),
            ErrorCode::bad_partition);
  EXPECT_EQ(code_of([] { Partition(0, 1, 1); }), ErrorCode::bad_partition);
  EXPECT_EQ(code_of([] { Partition(1, 2, 1, BlanketSplit{1, 2}); }), ErrorCode::bad_split);
}

TEST(Partition, IndicesFollowBlockOrder) {
  const Partition p(2, 2, 1, BlanketSplit{1, 1});
  EXPECT_EQ(p.indices(Block::external), (std::vector<Index>{0, 1}));
  EXPECT_EQ(p.indices(Block::sensory), (std::vector<Index>{2}));
  EXPECT_EQ(p.indices(Block::active), (std::vector<Index>{3}));
  EXPECT_EQ(p.indices(Block::internal), (std::vector<Index>{4}));
  EXPECT_EQ(p.indices(kEtaMu), (std::vector<Index>{0, 1, 4}));
}

TEST(Conditional, ExampleExternalGivenBlanket) {
  const auto m = models::example_model();
  const auto c = conditional(m, Block::external, Block::blanket);
  EXPECT_NEAR(c.mean_map(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(c.precision(0, 0), 2.0, 1e-15);
  // Precision-form cross-check −Π_η⁻¹ Π_ηb.
  EXPECT_NEAR(-m.precision()(1, 0) / m.precision()(0, 0), -0.5, 1e-15);
}

TEST(Conditional, ExampleInternalGivenBlanket) {
  const auto c = conditional(models::example_model(), Block::internal, Block::blanket);
  EXPECT_NEAR(c.mean_map(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(c.precision(0, 0), 2.0, 1e-15);
}

TEST(Conditional, IdentityIsIndependent) {
  const auto m = build_model(Matrix::Identity(3, 3), Partition(1, 1, 1));
  const auto c = conditional(m, Block::external, Block::blanket);
  EXPECT_EQ(c.mean_map(0, 0), 0.0);
  EXPECT_EQ(c.precision(0, 0), 1.0);
}

TEST(Conditional, PrecisionFormNeedsBlanket) {
  Matrix p(3, 3);
  p << 2, 1, 0.5, 1, 2, 1, 0.5, 1, 2;
  const auto m = build_model(p, Partition(1, 1, 1));
  EXPECT_EQ(code_of([&] {
              conditional(m, Block::external, Block::blanket, ConditionalForm::precision);
            }),
            ErrorCode::blanket_required);
  // The Schur path still works and matches the direct oracle.
  const auto c = conditional(m, Block::external, Block::blanket);
  const Matrix& s = m.covariance();
  EXPECT_NEAR(c.mean_map(0, 0), s(0, 1) / s(1, 1), 1e-14);
}

TEST(Conditional, SchurAndPrecisionFormsAgreeOnRandomModels) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Partition part(2, 2, 2);
    const auto m = build_model(random_blanket_precision(part, seed), part);
    ASSERT_TRUE(m.has_blanket());
    for (Block t : {Block::external, Block::internal}) {
      const auto a = conditional(m, t, Block::blanket, ConditionalForm::precision);
      const auto b = conditional(m, t, Block::blanket, ConditionalForm::schur);
      EXPECT_LE((a.mean_map - b.mean_map).norm(), 1e-10);
      EXPECT_LE((a.precision - b.precision).norm(), 1e-10 * a.precision.norm());
    }
  }
}

TEST(MarginalPrecision, ExampleBlocks) {
  const auto m = models::example_model();
  Matrix eb(2, 2), bm(2, 2);
  eb << 2, 1, 1, 1.5;
  bm << 1.5, 1, 1, 2;
  EXPECT_LE((marginal_precision(m, kEtaB) - eb).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((marginal_precision(m, kBMu) - bm).cwiseAbs().maxCoeff(), 1e-12);
  const auto id = build_model(Matrix::Identity(3, 3), Partition(1, 1, 1));
  EXPECT_LE((marginal_precision(id, kEtaMu) - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(ExpectedStates, ExampleValues) {
  const auto m = models::example_model();
  auto e = expected_states(m, Vector::Constant(1, 1.0));
  EXPECT_NEAR(e.external(0), -0.5, 1e-15);
  EXPECT_NEAR(e.internal(0), -0.5, 1e-15);
  e = expected_states(m, Vector::Constant(1, -2.0));
  EXPECT_NEAR(e.external(0), 1.0, 1e-15);
  EXPECT_NEAR(e.internal(0), 1.0, 1e-15);
  e = expected_states(m, Vector::Zero(1));
  EXPECT_EQ(e.external(0), 0.0);
  EXPECT_EQ(e.internal(0), 0.0);
}

TEST(Sampling, CovarianceConvergesAtExampleModel) {
  const auto m = models::example_model();
  const Matrix x = sample(m, 1'000'000, 11);
  const Matrix c = x.transpose() * x / static_cast<double>(x.rows());
  EXPECT_LE((c - m.covariance()).norm() / m.covariance().norm(), 0.01);
}

TEST(Sampling, IdentityMeanNearZero) {
  const auto m = build_model(Matrix::Identity(3, 3), Partition(1, 1, 1));
  const Matrix x = sample(m, 100'000, 5);
  for (Index j = 0; j < 3; ++j) EXPECT_LE(std::abs(x.col(j).mean()), 0.02);
}

TEST(Sampling, DeterministicInSeed) {
  const auto m = models::example_model();
  EXPECT_EQ(sample(m, 1, 42), sample(m, 1, 42));
  EXPECT_NE(sample(m, 1, 42), sample(m, 1, 43));
  // The first rows do not depend on how many rows are drawn.
  EXPECT_EQ(sample(m, 3000, 9).topRows(10), sample(m, 10, 9));
}

TEST(Sampling, CovarianceErrorShrinksLikeRootN) {
  // 5σ slack on each entry using Var(x_i x_j) = Σ_ii Σ_jj + Σ_ij².
  const auto m = models::example_model();
  const Matrix& s = m.covariance();
  for (Index n : {10'000, 100'000}) {
    const Matrix x = sample(m, n, 77);
    const Matrix c = x.transpose() * x / static_cast<double>(n);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 3; ++j) {
        const double sd = std::sqrt((s(i, i) * s(j, j) + s(i, j) * s(i, j)) / static_cast<double>(n));
        EXPECT_LE(std::abs(c(i, j) - s(i, j)), 5.0 * sd);
      }
    }
  }
}

class BlanketProperties : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(BlanketProperties, FactorisationAndBlockIdentities) {
  const std::uint64_t seed = GetParam();
  const Index de = 1 + static_cast<Index>(seed % 3);
  const Index db = 1 + static_cast<Index>((seed / 3) % 3);
  const Index dm = 1 + static_cast<Index>((seed / 9) % 3);
  const Partition part(de, db, dm);
  const auto m = build_model(random_blanket_precision(part, seed), part);
  ASSERT_TRUE(m.has_blanket());
  EXPECT_LE(m.inverse_residual(), 1e-10);

  // (η, μ) | b has block-diagonal conditional precision.
  const Block b[] = {Block::blanket};
  const auto joint = conditional(m, kEtaMu, b, ConditionalForm::schur);
  EXPECT_LE(joint.precision.topRightCorner(de, dm).cwiseAbs().maxCoeff(), 1e-10);

  const Matrix pe = m.precision_block(Block::external, Block::external);
  const Matrix pm = m.precision_block(Block::internal, Block::internal);
  const Matrix peb = m.precision_block(Block::external, Block::blanket);
  const Matrix pmb = m.precision_block(Block::internal, Block::blanket);
  const Matrix seb = m.covariance_block(Block::external, Block::blanket);
  const Matrix smb = m.covariance_block(Block::internal, Block::blanket);
  const Matrix sb = m.covariance_block(Block::blanket, Block::blanket);
  EXPECT_LE((pm * smb + pmb * sb).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((pe * seb + peb * sb).cwiseAbs().maxCoeff(), 1e-10);

  const Matrix mean_map = oracle::schur_mean_map(seb, sb);
  EXPECT_LE((mean_map + pe.inverse() * peb).cwiseAbs().maxCoeff(), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(RandomModels, BlanketProperties, ::testing::Range<std::uint64_t>(0, 54));
