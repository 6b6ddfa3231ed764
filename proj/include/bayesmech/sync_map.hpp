#pragma once

#include "bayesmech/gaussian.hpp"
#include "bayesmech/linalg.hpp"

#include <iosfwd>
#include <vector>

namespace bayesmech {

/// Linear map σ from internal to external states with σ(𝛍(b)) = 𝛈(b)
/// whenever `exists` holds.
struct SyncMap {
  /// Σ_ηb Σ_μb⁻ (canonical value).
  Matrix matrix;
  /// Π_η⁻¹ Π_ηb Π_μb⁻ Π_μ.
  Matrix precision_form;
  bool exists = false;
  /// Kernel-inclusion violation of ker Π_μb ⊆ ker Π_ηb.
  double residual_kernel = 0.0;
  /// Same test on the covariance blocks, ker Σ_μb ⊆ ker Σ_ηb.
  double residual_kernel_covariance = 0.0;
  Index rank_internal_blanket = 0;  // rank Π_μb
  Index rank_external_blanket = 0;  // rank Π_ηb
  /// Largest disagreement of the two closed forms on Im 𝛍, where both are
  /// defined to agree.
  double form_disagreement = 0.0;

  Vector operator()(const Vector& internal) const { return matrix * internal; }
};

struct SyncExistence {
  bool exists = false;
  double residual = 0.0;
};

inline constexpr double kDefaultKernelTolerance = 1e-8;

/// Kernel inclusion ker Π_μb ⊆ ker Π_ηb. Requires a Markov blanket.
SyncExistence exists_sync_map(const PrecisionModel& model,
                              double tol = kDefaultKernelTolerance);

/// Same criterion through the covariance blocks, ker Σ_μb ⊆ ker Σ_ηb.
SyncExistence exists_sync_map_covariance(const PrecisionModel& model,
                                         double tol = kDefaultKernelTolerance);

SyncMap build_sync_map(const PrecisionModel& model,
                       double tol = kDefaultKernelTolerance);

struct SyncBin {
  double center = 0.0;
  Index count = 0;
  Vector eta_hat;        // bin average of external samples
  Vector sigma_mu_hat;   // σ applied to the bin average of internal samples
  Vector se_eta;         // standard error of eta_hat
  Vector se_difference;  // standard error of sigma_mu_hat - eta_hat
};

struct SyncCheck {
  std::vector<SyncBin> bins;
  /// Bins dropped for holding fewer than min_count samples.
  std::vector<double> dropped_centers;
  double max_abs_mismatch = 0.0;
  /// Largest |σ(𝛍̂) − 𝛈̂| divided by its standard error.
  double max_standardized_mismatch = 0.0;
};

struct SyncCheckOptions {
  Index n_bins = 50;
  Index min_count = 100;
  /// Bins span ±range_sd standard deviations of the blanket samples.
  double range_sd = 3.0;
};

/// Binned estimate of 𝛈(b) and σ(𝛍(b)) from joint samples (rows). Only a
/// one-dimensional blanket is supported.
SyncCheck empirical_sync_check(const Matrix& samples, const Partition& partition,
                               const SyncMap& sync, const SyncCheckOptions& options = {});

/// CSV: bin_center,count,eta_hat_*,sigma_mu_hat_*,se_eta_*,se_diff_*
void write_sync_csv(std::ostream& out, const SyncCheck& check);

}  // namespace bayesmech
