#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace marketdyn {

enum class ErrorCode {
  parameter,
  domain,
  never_reached,
  bracket_invalid,
  accuracy_not_reached,
  integration_diverged,
  singular_matrix,
  degenerate_market,
  infeasible_market,
  inconsistent_spec,
  integration_invariant,
  initiation,
  calibration_infeasible,
  validation,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::domain: return "domain";
    case ErrorCode::never_reached: return "never-reached";
    case ErrorCode::bracket_invalid: return "bracket-invalid";
    case ErrorCode::accuracy_not_reached: return "accuracy-not-reached";
    case ErrorCode::integration_diverged: return "integration-diverged";
    case ErrorCode::singular_matrix: return "singular-matrix";
    case ErrorCode::degenerate_market: return "degenerate-market";
    case ErrorCode::infeasible_market: return "infeasible-market";
    case ErrorCode::inconsistent_spec: return "inconsistent-spec";
    case ErrorCode::integration_invariant: return "integration-invariant";
    case ErrorCode::initiation: return "initiation";
    case ErrorCode::calibration_infeasible: return "calibration-infeasible";
    case ErrorCode::validation: return "validation";
  }
  return "unknown";
}

// Every failure in the library is reported through this type. `value()` carries
// the payload some codes attach: the best estimate for accuracy_not_reached and
// the last valid time for integration_diverged. NaN otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        double value = std::numeric_limits<double>::quiet_NaN())
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        value_(value) {}

  ErrorCode code() const noexcept { return code_; }
  double value() const noexcept { return value_; }

 private:
  ErrorCode code_;
  double value_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace marketdyn
