#include "bayesmech/gaussian.hpp"

#include "bayesmech/error.hpp"
#include "bayesmech/random.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace bayesmech {

std::string_view to_string(Block block) noexcept {
  switch (block) {
    case Block::external: return "eta";
    case Block::blanket: return "b";
    case Block::internal: return "mu";
    case Block::sensory: return "s";
    case Block::active: return "a";
  }
  return "?";
}

Partition::Partition(Index dims_external, Index dims_blanket, Index dims_internal,
                     std::optional<BlanketSplit> split)
    : dims_external_(dims_external),
      dims_blanket_(dims_blanket),
      dims_internal_(dims_internal),
      split_(split) {
  if (dims_external < 1 || dims_blanket < 1 || dims_internal < 1) {
    fail(ErrorCode::bad_partition, "every block needs at least one dimension");
  }
  if (split_) {
    if (split_->dims_sensory < 1 || split_->dims_active < 1 ||
        split_->dims_sensory + split_->dims_active != dims_blanket) {
      fail(ErrorCode::bad_split, "sensory + active dimensions must equal the blanket dimension");
    }
  }
}

Partition Partition::with_split(Index dims_sensory, Index dims_active) const {
  return Partition(dims_external_, dims_blanket_, dims_internal_,
                   BlanketSplit{dims_sensory, dims_active});
}

Index Partition::offset(Block block) const {
  switch (block) {
    case Block::external: return 0;
    case Block::blanket: return dims_external_;
    case Block::internal: return dims_external_ + dims_blanket_;
    case Block::sensory:
      if (!split_) break;
      return dims_external_;
    case Block::active:
      if (!split_) break;
      return dims_external_ + split_->dims_sensory;
  }
  fail(ErrorCode::bad_block, std::string("block '") + std::string(to_string(block)) +
                                 "' needs a sensory/active split");
}

Index Partition::size(Block block) const {
  switch (block) {
    case Block::external: return dims_external_;
    case Block::blanket: return dims_blanket_;
    case Block::internal: return dims_internal_;
    case Block::sensory:
      if (!split_) break;
      return split_->dims_sensory;
    case Block::active:
      if (!split_) break;
      return split_->dims_active;
  }
  fail(ErrorCode::bad_block, std::string("block '") + std::string(to_string(block)) +
                                 "' needs a sensory/active split");
}

std::vector<Index> Partition::indices(Block block) const {
  std::vector<Index> out(static_cast<std::size_t>(size(block)));
  const Index first = offset(block);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = first + static_cast<Index>(i);
  return out;
}

std::vector<Index> Partition::indices(std::span<const Block> blocks) const {
  std::vector<Index> out;
  for (Block b : blocks) {
    auto part = indices(b);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::set<Index> unique(out.begin(), out.end());
  if (unique.size() != out.size()) {
    fail(ErrorCode::bad_block, "block list overlaps itself");
  }
  return out;
}

Matrix PrecisionModel::precision_block(Block rows, Block cols) const {
  return precision_.block(partition_.offset(rows), partition_.offset(cols),
                          partition_.size(rows), partition_.size(cols));
}

Matrix PrecisionModel::covariance_block(Block rows, Block cols) const {
  return covariance_.block(partition_.offset(rows), partition_.offset(cols),
                           partition_.size(rows), partition_.size(cols));
}

PrecisionModel PrecisionModel::with_split(Index dims_sensory, Index dims_active) const {
  PrecisionModel out(*this);
  out.partition_ = partition_.with_split(dims_sensory, dims_active);
  return out;
}

PrecisionModel build_model(const Matrix& precision, const Partition& partition,
                           const ModelTolerances& tol) {
  const Index d = partition.total();
  if (precision.rows() != d || precision.cols() != d) {
    fail(ErrorCode::bad_partition,
         "partition sums to " + std::to_string(d) + " but precision is " +
             std::to_string(precision.rows()) + "x" + std::to_string(precision.cols()));
  }
  if (!precision.allFinite()) {
    fail(ErrorCode::non_finite, "precision has non-finite entries");
  }
  const double scale = precision.norm();
  if (asymmetry(precision) > tol.symmetry * scale) {
    fail(ErrorCode::not_symmetric, "precision is not symmetric");
  }
  const Matrix sym = symmetrize(precision);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success || scale == 0.0) {
    fail(ErrorCode::not_positive_definite, "precision is not positive definite");
  }

  PrecisionModel m(partition);
  m.precision_ = sym;
  m.covariance_ = symmetrize(llt.solve(Matrix::Identity(d, d)));
  m.inverse_residual_ = (m.precision_ * m.covariance_ - Matrix::Identity(d, d)).norm() /
                        std::sqrt(static_cast<double>(d));
  if (!(m.inverse_residual_ <= 1e-10)) {
    fail(ErrorCode::ill_conditioned,
         "precision too ill-conditioned: |PiSigma - I| = " + std::to_string(m.inverse_residual_));
  }
  m.blanket_violation_ =
      m.precision_block(Block::external, Block::internal).cwiseAbs().maxCoeff();
  m.blanket_tolerance_ = tol.blanket * scale;
  m.has_blanket_ = m.blanket_violation_ <= m.blanket_tolerance_;
  return m;
}

namespace {

bool is_single(std::span<const Block> blocks, Block b) {
  return blocks.size() == 1 && blocks[0] == b;
}

}  // namespace

ConditionalGaussian conditional(const PrecisionModel& model,
                                std::span<const Block> target,
                                std::span<const Block> given, ConditionalForm form) {
  if (target.empty() || given.empty()) {
    fail(ErrorCode::bad_block, "conditional needs non-empty target and given blocks");
  }
  const auto& part = model.partition();
  const auto t_idx = part.indices(target);
  const auto g_idx = part.indices(given);
  {
    std::set<Index> all(t_idx.begin(), t_idx.end());
    all.insert(g_idx.begin(), g_idx.end());
    if (all.size() != t_idx.size() + g_idx.size()) {
      fail(ErrorCode::bad_block, "target and given blocks overlap");
    }
  }

  const bool precision_shape =
      (is_single(target, Block::external) || is_single(target, Block::internal)) &&
      is_single(given, Block::blanket);
  if (form == ConditionalForm::precision && !precision_shape) {
    fail(ErrorCode::bad_block, "precision form only covers eta|b and mu|b");
  }
  if (form == ConditionalForm::precision && !model.has_blanket()) {
    fail(ErrorCode::blanket_required, "precision-form conditional needs a Markov blanket");
  }
  const bool use_precision =
      form == ConditionalForm::precision ||
      (form == ConditionalForm::automatic && precision_shape && model.has_blanket());

  const Matrix& cov = model.covariance();
  const Matrix s_gg = select(cov, g_idx, g_idx);
  const Matrix s_gt = select(cov, g_idx, t_idx);
  Eigen::LLT<Matrix> llt(s_gg);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::singular_block, "covariance of the conditioning block is singular");
  }

  ConditionalGaussian out;
  out.target.assign(target.begin(), target.end());
  out.given.assign(given.begin(), given.end());
  out.mean_map = llt.solve(s_gt).transpose();
  if (use_precision) {
    out.precision = select(model.precision(), t_idx, t_idx);
    out.covariance = symmetrize(out.precision.llt().solve(
        Matrix::Identity(out.precision.rows(), out.precision.cols())));
  } else {
    out.covariance = symmetrize(select(cov, t_idx, t_idx) - s_gt.transpose() * llt.solve(s_gt));
    Eigen::LLT<Matrix> c(out.covariance);
    if (c.info() != Eigen::Success) {
      fail(ErrorCode::singular_block, "conditional covariance is not positive definite");
    }
    out.precision = symmetrize(c.solve(Matrix::Identity(out.covariance.rows(),
                                                        out.covariance.cols())));
  }
  return out;
}

ConditionalGaussian conditional(const PrecisionModel& model, Block target, Block given,
                                ConditionalForm form) {
  const Block t[] = {target};
  const Block g[] = {given};
  return conditional(model, t, g, form);
}

Matrix marginal_precision(const PrecisionModel& model, std::span<const Block> blocks) {
  if (blocks.empty()) fail(ErrorCode::bad_block, "marginal_precision needs at least one block");
  const auto idx = model.partition().indices(blocks);
  const Matrix sub = select(model.covariance(), idx, idx);
  Eigen::LLT<Matrix> llt(sub);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::singular_block, "principal submatrix of the covariance is singular");
  }
  return symmetrize(llt.solve(Matrix::Identity(sub.rows(), sub.cols())));
}

ExpectedStates expected_states(const PrecisionModel& model, const Vector& blanket) {
  if (!model.has_blanket()) {
    fail(ErrorCode::blanket_required, "expected states need a Markov blanket");
  }
  if (blanket.size() != model.partition().dims_blanket()) {
    fail(ErrorCode::dimension_mismatch, "blanket value has the wrong dimension");
  }
  const auto eta = conditional(model, Block::external, Block::blanket);
  const auto mu = conditional(model, Block::internal, Block::blanket);
  return {eta.mean_map * blanket, mu.mean_map * blanket};
}

Matrix sample_gaussian(const Matrix& covariance, Index n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::too_few_samples, "sample count must be at least 1");
  const Index d = covariance.rows();
  Matrix out(n, d);
  if (d == 0) return out;
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::not_positive_definite, "sampling covariance is not positive definite");
  }
  const Matrix lower = llt.matrixL();
  constexpr Index chunk = 1024;
  const Index n_chunks = (n + chunk - 1) / chunk;
  parallel_ranges(static_cast<std::size_t>(n_chunks), [&](std::size_t begin, std::size_t end) {
    Vector z(d);
    for (std::size_t c = begin; c < end; ++c) {
      auto rng = make_rng(seed, c);
      boost::random::normal_distribution<double> normal;
      const Index first = static_cast<Index>(c) * chunk;
      const Index last = std::min(n, first + chunk);
      for (Index i = first; i < last; ++i) {
        for (Index k = 0; k < d; ++k) z(k) = normal(rng);
        out.row(i).noalias() = (lower * z).transpose();
      }
    }
  });
  return out;
}

Matrix sample(const PrecisionModel& model, Index n, std::uint64_t seed) {
  return sample_gaussian(model.covariance(), n, seed);
}

Matrix random_blanket_precision(const Partition& partition, std::uint64_t seed,
                                const RandomModelOptions& options) {
  const Index d = partition.total();
  const Index ne = partition.dims_external();
  const Index nb = partition.dims_blanket();
  const Index nm = partition.dims_internal();
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> diag(options.min_diag, options.max_diag);

  Matrix lower = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < i; ++j) lower(i, j) = options.coupling * normal(rng);
    lower(i, i) = diag(rng);
  }
  // A zero (μ, η) factor block is what makes Π_μη vanish.
  lower.block(ne + nb, 0, nm, ne).setZero();
  if (options.decouple_external) lower.block(ne, 0, nb, ne).setZero();
  if (options.internal_blanket_rank) {
    const Index r = std::clamp<Index>(*options.internal_blanket_rank, 0, std::min(nm, nb));
    Matrix u(nm, r), v(nb, r);
    for (Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);
    lower.block(ne + nb, ne, nm, nb) = options.coupling * u * v.transpose();
  }
  return symmetrize(lower * lower.transpose());
}

}  // namespace bayesmech
