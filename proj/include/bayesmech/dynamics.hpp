#pragma once

#include "bayesmech/gaussian.hpp"
#include "bayesmech/linalg.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bayesmech {

using VectorField = std::function<Vector(const Vector&)>;
using MatrixField = std::function<Matrix(const Vector&)>;

enum class DiffusionMode { linear, state_dependent };

/// Matrix fields of a state-dependent diffusion. Missing divergences fall
/// back to central finite differences with step 1e-5 * (1 + |x_j|), which
/// loses roughly half the significant digits of the field; supply analytic
/// divergences whenever possible.
///
/// The drift is well defined for any fields, but existence and uniqueness of
/// solutions (linear growth and Lipschitz bounds) are the caller's obligation.
struct StateDependentFields {
  MatrixField q;
  VectorField divergence_q;
  /// State-dependent ς; the constant noise operator is used when empty.
  MatrixField noise;
  VectorField divergence_gamma;
  /// Identifies the fields in model fingerprints.
  std::string name = "custom";
};

/// Stationary diffusion dx = (Γ+Q)∇log p dt + ∇·(Γ+Q) dt + ς dW with
/// p = N(0, Π⁻¹) and Γ = ςςᵀ/2. Immutable after construction.
class DiffusionModel {
 public:
  DiffusionMode mode() const noexcept { return mode_; }
  Index dims() const noexcept { return precision_.rows(); }
  Index noise_dims() const noexcept { return noise_.cols(); }

  const Matrix& precision() const noexcept { return precision_; }
  const Matrix& covariance() const noexcept { return covariance_; }
  /// Present when the steady state carries an (η, b, μ) partition.
  const std::optional<PrecisionModel>& steady_state() const noexcept { return steady_state_; }

  /// Constant noise operator ς (d × m).
  const Matrix& noise_operator() const noexcept { return noise_; }
  /// Γ = ςςᵀ/2 for the constant noise operator.
  const Matrix& gamma() const noexcept { return gamma_; }
  /// Constant Q; in state-dependent mode this is Q at the origin.
  const Matrix& q() const noexcept { return q_; }
  /// B = −(Γ+Q)Π. Throws linear_mode_required outside linear mode.
  const Matrix& drift_matrix() const;

  Matrix gamma_at(const Vector& x) const;
  Matrix q_at(const Vector& x) const;
  Matrix noise_at(const Vector& x) const;
  Vector divergence_gamma(const Vector& x) const;
  Vector divergence_q(const Vector& x) const;

  Vector drift(const Vector& x) const;
  void drift_into(const Vector& x, Vector& out) const;

  /// ς ≡ 0: the flow is deterministic.
  bool deterministic() const noexcept { return deterministic_; }
  bool constant_noise() const noexcept { return !fields_ || !fields_->noise; }

  /// Hex SHA-256 over the defining matrices and mode.
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  friend DiffusionModel build_diffusion(const PrecisionModel&, const Matrix&, const Matrix&,
                                        const std::optional<Matrix>&);
  friend DiffusionModel build_state_dependent_diffusion(const PrecisionModel&,
                                                        StateDependentFields, const Matrix&);
  friend DiffusionModel build_radial_solenoidal_diffusion(const PrecisionModel&, const Matrix&,
                                                          const Matrix&);
  friend DiffusionModel linear_diffusion_from_drift(const Matrix&, const Matrix&);

 private:
  DiffusionModel() = default;
  void finalize(std::string_view descriptor);

  DiffusionMode mode_ = DiffusionMode::linear;
  Matrix precision_;
  Matrix covariance_;
  std::optional<PrecisionModel> steady_state_;
  Matrix noise_;
  Matrix gamma_;
  Matrix q_;
  Matrix drift_matrix_;
  bool deterministic_ = false;
  std::shared_ptr<const StateDependentFields> fields_;
  // Radial solenoidal preset: Q(x) = q_ (1 + |x|²).
  bool radial_ = false;
  Matrix gamma_precision_;  // ΓΠ
  Matrix q_precision_;      // QΠ
  std::string fingerprint_;
};

/// Linear diffusion with constant Γ = ςςᵀ/2 and antisymmetric Q. When `gamma`
/// is given it must equal ςςᵀ/2 to 1e-12.
DiffusionModel build_diffusion(const PrecisionModel& model, const Matrix& q,
                               const Matrix& noise_operator,
                               const std::optional<Matrix>& gamma = std::nullopt);

/// State-dependent Q (and optionally ς) fields around the Gaussian steady state.
DiffusionModel build_state_dependent_diffusion(const PrecisionModel& model,
                                               StateDependentFields fields,
                                               const Matrix& noise_operator);

/// Built-in non-linear example: Q(x) = Q₀(1 + |x|²), ∇·Q(x) = 2 Q₀ x, constant ς.
/// p stays invariant while transitions become non-Gaussian.
DiffusionModel build_radial_solenoidal_diffusion(const PrecisionModel& model,
                                                 const Matrix& q0,
                                                 const Matrix& noise_operator);

/// Linear diffusion with a prescribed Hurwitz drift B. The steady covariance
/// solves BΣ + ΣBᵀ + ςςᵀ = 0 and Q = −(BΣ + Γ); it has no partition.
DiffusionModel linear_diffusion_from_drift(const Matrix& drift, const Matrix& noise_operator);

struct HelmholtzSplit {
  VectorField reversible;    // Γ∇log p + ∇·Γ
  VectorField irreversible;  // Q∇log p + ∇·Q
};

HelmholtzSplit helmholtz_split(const DiffusionModel& diffusion);

/// ‖BΣ + ΣBᵀ + 2Γ‖_F / ‖Γ‖_F (absolute when Γ = 0). Linear mode only.
double stationarity_residual(const DiffusionModel& diffusion);
double lyapunov_residual(const Matrix& drift, const Matrix& covariance, const Matrix& gamma);

/// Drift of the time-reversed process, x ↦ −Bx − 2ΓΠx. Linear mode only.
VectorField time_reversal_drift(const DiffusionModel& diffusion);

/// States of n_traj trajectories at the recorded steps, laid out
/// [trajectory][record][dimension].
struct TrajectoryEnsemble {
  Index n_traj = 0;
  Index n_records = 0;
  Index dims = 0;
  std::vector<double> data;
  std::vector<Index> steps;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string model_fingerprint;
  std::vector<std::string> warnings;

  double time(Index record) const { return static_cast<double>(steps[static_cast<std::size_t>(record)]) * dt; }
  Eigen::Map<const Vector> state(Index traj, Index record) const {
    return Eigen::Map<const Vector>(data.data() + (traj * n_records + record) * dims, dims);
  }
  Eigen::Map<Vector> state(Index traj, Index record) {
    return Eigen::Map<Vector>(data.data() + (traj * n_records + record) * dims, dims);
  }
  /// n_traj × dims matrix of the states at one record.
  Matrix states_at(Index record) const;
  /// n_records × dims path of one trajectory.
  Matrix path(Index traj) const;
};

struct IntegrateOptions {
  /// Keep every record_stride-th step; step 0 and the last step are always kept.
  Index record_stride = 1;
};

/// Euler-Maruyama x_{k+1} = x_k + f(x_k)dt + ς(x_k)√dt z_k. Deterministic flows
/// (ς ≡ 0) use classical fourth-order Runge-Kutta. Trajectory i draws from
/// the RNG stream derived from (seed, i), so output is independent of the
/// thread count. dt·‖B‖₂ ≥ 2 adds a warning; non-finite states throw.
TrajectoryEnsemble integrate(const DiffusionModel& diffusion, const Matrix& x0, double dt,
                             Index n_steps, std::uint64_t seed,
                             const IntegrateOptions& options = {});

/// n draws from p(x | clamped block = value): the clamped coordinates are
/// fixed, the rest come from the exact Gaussian conditional. Only the blanket
/// or (with a split) its sensory part may be clamped.
Matrix sample_conditional_initial(const PrecisionModel& model, Block clamped,
                                  const Vector& value, Index n, std::uint64_t seed);

}  // namespace bayesmech
