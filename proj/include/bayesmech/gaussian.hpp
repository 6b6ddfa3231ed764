#pragma once

#include "bayesmech/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace bayesmech {

/// State blocks in the fixed order (η, b, μ). `sensory` and `active` are the
/// two halves of the blanket when it is split.
enum class Block { external, blanket, internal, sensory, active };

std::string_view to_string(Block block) noexcept;

struct BlanketSplit {
  Index dims_sensory = 0;
  Index dims_active = 0;

  friend bool operator==(const BlanketSplit&, const BlanketSplit&) = default;
};

/// Index partition of the state into external, blanket and internal states.
class Partition {
 public:
  /// Throws bad_partition unless every count is >= 1 and the split (if
  /// any) sums to dims_blanket.
  Partition(Index dims_external, Index dims_blanket, Index dims_internal,
            std::optional<BlanketSplit> split = std::nullopt);

  Index dims_external() const noexcept { return dims_external_; }
  Index dims_blanket() const noexcept { return dims_blanket_; }
  Index dims_internal() const noexcept { return dims_internal_; }
  Index total() const noexcept {
    return dims_external_ + dims_blanket_ + dims_internal_;
  }
  const std::optional<BlanketSplit>& split() const noexcept { return split_; }

  Partition with_split(Index dims_sensory, Index dims_active) const;

  Index offset(Block block) const;
  Index size(Block block) const;
  std::vector<Index> indices(Block block) const;
  std::vector<Index> indices(std::span<const Block> blocks) const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  Index dims_external_;
  Index dims_blanket_;
  Index dims_internal_;
  std::optional<BlanketSplit> split_;
};

struct ModelTolerances {
  /// Relative to ‖Π‖_F.
  double symmetry = 1e-9;
  /// Relative to ‖Π‖_F; Π_ημ entries at or below this count as zero.
  double blanket = 1e-12;
};

/// Zero-mean Gaussian steady state N(0, Π⁻¹) over a partitioned state.
/// Immutable after construction.
class PrecisionModel {
 public:
  const Partition& partition() const noexcept { return partition_; }
  const Matrix& precision() const noexcept { return precision_; }
  const Matrix& covariance() const noexcept { return covariance_; }
  /// Always zero; non-zero set-points are handled by translating inputs.
  Vector mean() const { return Vector::Zero(partition_.total()); }
  Index dims() const noexcept { return partition_.total(); }

  bool has_blanket() const noexcept { return has_blanket_; }
  /// max |Π_ημ|; compared against blanket_tolerance() to set the flag.
  double blanket_violation() const noexcept { return blanket_violation_; }
  double blanket_tolerance() const noexcept { return blanket_tolerance_; }
  /// ‖ΠΣ − I‖_F / √d.
  double inverse_residual() const noexcept { return inverse_residual_; }

  Matrix precision_block(Block rows, Block cols) const;
  Matrix covariance_block(Block rows, Block cols) const;

  /// Same matrices, blanket split into (sensory, active).
  PrecisionModel with_split(Index dims_sensory, Index dims_active) const;

  friend PrecisionModel build_model(const Matrix& precision,
                                    const Partition& partition,
                                    const ModelTolerances& tol);

 private:
  PrecisionModel(Partition partition) : partition_(std::move(partition)) {}

  Partition partition_;
  Matrix precision_;
  Matrix covariance_;
  bool has_blanket_ = false;
  double blanket_violation_ = 0.0;
  double blanket_tolerance_ = 0.0;
  double inverse_residual_ = 0.0;
};

/// Validates Π (symmetric, positive definite, matching partition) and
/// computes Σ = Π⁻¹ by Cholesky solve.
PrecisionModel build_model(const Matrix& precision, const Partition& partition,
                           const ModelTolerances& tol = {});

enum class ConditionalForm {
  /// Precision form when it applies, Schur complement otherwise.
  automatic,
  /// Requires target ∈ {η, μ}, given = b and a Markov blanket.
  precision,
  schur,
};

/// p(target | given) = N(mean_map · given_value, precision⁻¹).
struct ConditionalGaussian {
  Matrix mean_map;
  Matrix precision;
  Matrix covariance;
  std::vector<Block> target;
  std::vector<Block> given;
};

ConditionalGaussian conditional(const PrecisionModel& model,
                                std::span<const Block> target,
                                std::span<const Block> given,
                                ConditionalForm form = ConditionalForm::automatic);
ConditionalGaussian conditional(const PrecisionModel& model, Block target,
                                Block given,
                                ConditionalForm form = ConditionalForm::automatic);

/// Inverse of the principal submatrix of Σ over the listed blocks, e.g.
/// {blanket, internal} gives Σ_{b:μ}⁻¹.
Matrix marginal_precision(const PrecisionModel& model,
                          std::span<const Block> blocks);

struct ExpectedStates {
  Vector external;
  Vector internal;
};

/// (𝛈(b), 𝛍(b)) = (Σ_ηb Σ_b⁻¹ b, Σ_μb Σ_b⁻¹ b). Requires a Markov blanket.
ExpectedStates expected_states(const PrecisionModel& model, const Vector& blanket);

/// n i.i.d. draws (rows) from N(0, covariance) through its lower Cholesky
/// factor. Deterministic in (seed, n).
Matrix sample_gaussian(const Matrix& covariance, Index n, std::uint64_t seed);
Matrix sample(const PrecisionModel& model, Index n, std::uint64_t seed);

/// Random SPD precision with Π_ημ = 0, built as L Lᵀ from a lower-triangular
/// factor whose (μ, η) block is zero.
struct RandomModelOptions {
  /// Scale of the off-diagonal factor entries (standard normal times this).
  double coupling = 1.0;
  /// Diagonal factor entries are drawn uniformly from [min_diag, max_diag].
  double min_diag = 0.5;
  double max_diag = 1.5;
  /// Rank of the factor's (μ, b) block; nullopt means full (generic) rank.
  std::optional<Index> internal_blanket_rank;
  /// Zero the factor's (b, η) block, which makes Π_ηb = 0.
  bool decouple_external = false;
};

Matrix random_blanket_precision(const Partition& partition, std::uint64_t seed,
                                const RandomModelOptions& options = {});

}  // namespace bayesmech
