#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bayesmech {

enum class ErrorCode {
  not_symmetric,
  not_positive_definite,
  bad_partition,
  bad_block,
  bad_split,
  blanket_required,
  singular_block,
  ill_conditioned,
  sync_map_missing,
  too_few_samples,
  unsupported_dimension,
  gamma_inconsistent,
  not_antisymmetric,
  dimension_mismatch,
  linear_mode_required,
  non_finite,
  unstable_chain,
  lag_too_large,
  internal_consistency,
  config_invalid,
  io_failure,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can turn it into a structured error report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bayesmech
