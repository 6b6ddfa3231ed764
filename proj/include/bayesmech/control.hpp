#pragma once

#include "bayesmech/dynamics.hpp"
#include "bayesmech/gaussian.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace bayesmech {

/// Steady state with the blanket split into sensory and active states.
class ControlModel {
 public:
  const PrecisionModel& model() const noexcept { return model_; }
  /// K = Σ_{b:μ}⁻¹ over (s, a, μ).
  const Matrix& k_matrix() const noexcept { return k_matrix_; }
  /// Σ_as Σ_s⁻¹.
  const Matrix& active_gain() const noexcept { return active_gain_; }

  friend ControlModel split_blanket(const PrecisionModel& model, Index dims_sensory,
                                    Index dims_active);

 private:
  explicit ControlModel(PrecisionModel model) : model_(std::move(model)) {}

  PrecisionModel model_;
  Matrix k_matrix_;
  Matrix active_gain_;
};

/// Throws bad_split unless dims_sensory + dims_active = dims_blanket.
ControlModel split_blanket(const PrecisionModel& model, Index dims_sensory, Index dims_active);

/// 𝐚(s) = E[a | s] = Σ_as Σ_s⁻¹ s.
Vector expected_active(const ControlModel& control, const Vector& sensory);

/// [s, a, μ] K [s; a; μ].
double control_cost(const ControlModel& control, const Vector& sensory, const Vector& active,
                    const Vector& internal);

struct ControlOptimum {
  Vector active;
  Vector internal;
};

/// Minimiser over (a, μ) of the control cost at fixed s, from the normal
/// equations; checked against the conditional means E[a|s], E[μ|s].
ControlOptimum argmin_control(const ControlModel& control, const Vector& sensory);

/// One level of an integrator chain:
///   ds⁽ⁱ⁾ = (A_i s⁽ⁱ⁾ + C_i s⁽ⁱ⁺¹⁾) dt + ς_i dW⁽ⁱ⁾.
/// The last level has no forward coupling.
struct ChainLevel {
  Matrix self_coupling;
  Matrix next_coupling;
  Matrix noise;
};

struct IntegratorChain {
  std::vector<ChainLevel> levels;
  /// s = F s⁽⁰⁾.
  Matrix output_map;

  /// n: levels run from s⁽⁰⁾ to s⁽ⁿ⁾.
  Index order() const { return static_cast<Index>(levels.size()) - 1; }
  Index dims() const;
  Index level_offset(Index level) const;
  /// Block-bidiagonal drift of the stacked state.
  Matrix stacked_drift() const;
  /// Block-diagonal noise of the stacked state.
  Matrix stacked_noise() const;
  /// Output map lifted to the stacked state, [F, 0, ..., 0].
  Matrix stacked_output() const;
};

struct ChainSystem {
  IntegratorChain chain;
  DiffusionModel diffusion;
};

/// Validates shapes, requires a Hurwitz stacked drift (unstable_chain
/// otherwise) and solves for the stationary covariance.
ChainSystem build_chain(std::vector<ChainLevel> levels, const Matrix& output_map);

/// C(τ) = E[s_t s_{t+τ}ᵀ] = F Σ exp(Bᵀτ) Fᵀ for the stationary chain.
Matrix analytic_autocovariance(const ChainSystem& system, double lag);

struct AutocovarianceEstimate {
  std::vector<double> lags;
  std::vector<Matrix> values;
  std::vector<Matrix> standard_errors;
};

struct AutocovarianceOptions {
  /// Jackknife groups of (trajectory, time-window) units.
  Index n_groups = 50;
  /// Records skipped at the start of each trajectory.
  Index burn_in_records = 0;
};

/// Time-and-ensemble average of y_t y_{t+τ}ᵀ for the observation y = H x,
/// with delete-one-group jackknife standard errors. Lags are in time units
/// and must be multiples of the record spacing.
AutocovarianceEstimate autocovariance(const TrajectoryEnsemble& ensemble,
                                      const Matrix& observation, std::span<const double> lags,
                                      const AutocovarianceOptions& options = {});
AutocovarianceEstimate autocovariance(const TrajectoryEnsemble& ensemble,
                                      std::span<const Index> coords,
                                      std::span<const double> lags,
                                      const AutocovarianceOptions& options = {});

/// CSV: lag,c_<i>_<j>...,se_<i>_<j>...
void write_autocovariance_csv(std::ostream& out, const AutocovarianceEstimate& estimate,
                              const std::vector<Matrix>* analytic = nullptr);

}  // namespace bayesmech
