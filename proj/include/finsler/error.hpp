#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finsler {

enum class ErrorCode {
  ZeroVector,
  OutOfChart,
  DimensionMismatch,
  SpecValidation,
  DegenerateMetric,
  DifferentiationFailure,
  DegenerateFlag,
  NonSmoothPoint,
  ZeroVelocity,
  IntegrationFailure,
  NotClosed,
  SamplingFailure,
  NotBerwald,
  WitnessDisagreement,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Exception type for every failure raised by the library. The code lets
/// callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace finsler
