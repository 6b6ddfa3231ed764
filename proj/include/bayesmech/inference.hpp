#pragma once

#include "bayesmech/dynamics.hpp"
#include "bayesmech/gaussian.hpp"
#include "bayesmech/sync_map.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bayesmech {

/// Variational free energy of a Gaussian steady state with a Markov blanket
/// and an existing synchronisation map:
///
///   F(b, μ) = ½ (σ(μ) − 𝛈(b))ᵀ Π_η (σ(μ) − 𝛈(b)) + ½ [b; μ]ᵀ Σ_{b:μ}⁻¹ [b; μ]
///
/// up to the additive log-partition constant, which is dropped throughout.
class FreeEnergyEvaluator {
 public:
  /// Throws blanket_required or sync_map_missing.
  static FreeEnergyEvaluator create(const PrecisionModel& model,
                                    double kernel_tol = kDefaultKernelTolerance);

  const PrecisionModel& model() const noexcept { return model_; }
  const SyncMap& sync() const noexcept { return sync_; }
  /// Σ_{b:μ}⁻¹, the precision of p(b, μ).
  const Matrix& k_matrix() const noexcept { return k_matrix_; }
  /// 𝛈(b) = external_map · b.
  const Matrix& external_map() const noexcept { return external_map_; }
  /// 𝛍(b) = internal_map · b.
  const Matrix& internal_map() const noexcept { return internal_map_; }
  const Matrix& external_precision() const noexcept { return external_precision_; }

 private:
  explicit FreeEnergyEvaluator(const PrecisionModel& model) : model_(model) {}

  PrecisionModel model_;
  SyncMap sync_;
  Matrix k_matrix_;
  Matrix external_map_;
  Matrix internal_map_;
  Matrix external_precision_;
};

struct FreeEnergyTerms {
  double kl = 0.0;             // D_KL[q_μ(η) ‖ p(η|b)]
  double neg_log_joint = 0.0;  // −log p(b, μ) up to a constant
  double total = 0.0;
};

FreeEnergyTerms free_energy_terms(const FreeEnergyEvaluator& ev, const Vector& blanket,
                                  const Vector& internal);
double free_energy(const FreeEnergyEvaluator& ev, const Vector& blanket, const Vector& internal);
double kl_to_posterior(const FreeEnergyEvaluator& ev, const Vector& blanket,
                       const Vector& internal);

/// Energy minus entropy, E_q[−log p(x)] − H[q_μ], with every normalising
/// constant kept. Differs from free_energy by a constant.
double energy_minus_entropy(const FreeEnergyEvaluator& ev, const Vector& blanket,
                            const Vector& internal);

/// ξ = Π_η (η − σ(μ)).
Vector prediction_error(const FreeEnergyEvaluator& ev, const Vector& external,
                        const Vector& internal);

/// argmin_μ F(b, μ) = 𝛍(b), cross-checked against the normal equations of
/// the quadratic.
Vector minimize_free_energy(const FreeEnergyEvaluator& ev, const Vector& blanket);

enum class Averaging {
  /// F(b_t, μ_t) along each path.
  per_trajectory,
  /// F(b_t, 𝛍(b_t)): internal variables averaged for each blanket state.
  conditional_mean,
};

std::string_view to_string(Averaging averaging) noexcept;

struct DescentSpec {
  /// Blanket (or its sensory part) is clamped at clamp_value at t = 0.
  Block clamped = Block::blanket;
  Vector clamp_value;
  Index n_traj = 1000;
  double dt = 0.01;
  Index n_steps = 1000;
  std::uint64_t seed = 0;
  Averaging averaging = Averaging::conditional_mean;
  Index record_stride = 1;
  bool keep_per_trajectory = false;
};

struct FreeEnergyReport {
  std::vector<double> times;
  Vector mean_F;
  Vector se_F;
  /// n_traj × n_records, only when requested.
  std::optional<Matrix> per_traj_F;
  Index n_traj = 0;
  Index n_records = 0;
  Index dims_external = 0;
  /// ξ laid out [trajectory][record][external dimension].
  std::vector<double> prediction_errors;
  /// Trajectory 0 with 𝛈(b_t) and the prediction σ(·) compared against it.
  Matrix sample_path;
  Matrix sample_expected_external;
  Matrix sample_prediction;
  std::vector<std::string> warnings;

  Eigen::Map<const Vector> xi(Index traj, Index record) const {
    return Eigen::Map<const Vector>(
        prediction_errors.data() + (traj * n_records + record) * dims_external, dims_external);
  }
};

/// Ensemble started from p(x₀ | clamped = value) and integrated per the spec.
TrajectoryEnsemble descent_ensemble(const DiffusionModel& diffusion, const DescentSpec& spec);

/// Integrates an ensemble started from p(x₀ | clamped = value) and tracks the
/// ensemble-averaged free energy and prediction errors over time.
FreeEnergyReport descent_experiment(const DiffusionModel& diffusion, const DescentSpec& spec);

/// Summary of the free-energy track of an ensemble already integrated.
FreeEnergyReport free_energy_report(const FreeEnergyEvaluator& ev,
                                    const TrajectoryEnsemble& ensemble, Averaging averaging,
                                    bool keep_per_trajectory);

struct Baseline {
  double mean = 0.0;
  double se = 0.0;
};

/// Average free energy under n exact steady-state samples.
Baseline steady_state_baseline(const FreeEnergyEvaluator& ev, Averaging averaging, Index n,
                               std::uint64_t seed);

/// CSV: t,mean_F,se_F
void write_free_energy_csv(std::ostream& out, const FreeEnergyReport& report);
/// CSV: t,F_0,...,F_{n-1}
void write_per_trajectory_csv(std::ostream& out, const FreeEnergyReport& report);
/// CSV: traj_id,t,xi_0,...
void write_prediction_error_csv(std::ostream& out, const FreeEnergyReport& report);
/// CSV: t,x_0..,eta_expected_*,prediction_*
void write_sample_path_csv(std::ostream& out, const FreeEnergyReport& report);

}  // namespace bayesmech
