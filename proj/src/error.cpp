#include "finsler/error.hpp"

namespace finsler {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::OutOfChart: return "OutOfChart";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SpecValidation: return "SpecValidation";
    case ErrorCode::DegenerateMetric: return "DegenerateMetric";
    case ErrorCode::DifferentiationFailure: return "DifferentiationFailure";
    case ErrorCode::DegenerateFlag: return "DegenerateFlag";
    case ErrorCode::NonSmoothPoint: return "NonSmoothPoint";
    case ErrorCode::ZeroVelocity: return "ZeroVelocity";
    case ErrorCode::IntegrationFailure: return "IntegrationFailure";
    case ErrorCode::NotClosed: return "NotClosed";
    case ErrorCode::SamplingFailure: return "SamplingFailure";
    case ErrorCode::NotBerwald: return "NotBerwald";
    case ErrorCode::WitnessDisagreement: return "WitnessDisagreement";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace finsler
