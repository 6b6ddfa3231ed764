#include "bayesmech/error.hpp"

namespace bayesmech {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::not_symmetric: return "NotSymmetric";
    case ErrorCode::not_positive_definite: return "NotPositiveDefinite";
    case ErrorCode::bad_partition: return "BadPartition";
    case ErrorCode::bad_block: return "BadBlock";
    case ErrorCode::bad_split: return "BadSplit";
    case ErrorCode::blanket_required: return "BlanketRequired";
    case ErrorCode::singular_block: return "SingularBlock";
    case ErrorCode::ill_conditioned: return "IllConditioned";
    case ErrorCode::sync_map_missing: return "SyncMapMissing";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::unsupported_dimension: return "UnsupportedDimension";
    case ErrorCode::gamma_inconsistent: return "GammaInconsistent";
    case ErrorCode::not_antisymmetric: return "NotAntisymmetric";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::linear_mode_required: return "LinearModeRequired";
    case ErrorCode::non_finite: return "NonFinite";
    case ErrorCode::unstable_chain: return "UnstableChain";
    case ErrorCode::lag_too_large: return "LagTooLarge";
    case ErrorCode::internal_consistency: return "InternalConsistency";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::io_failure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace bayesmech
