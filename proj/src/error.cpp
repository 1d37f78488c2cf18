#include "lfv/error.hpp"

namespace lfv {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateHomography: return "DegenerateHomography";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::CalibrationCountMismatch: return "CalibrationCountMismatch";
    case ErrorCode::PlaneBehindCamera: return "PlaneBehindCamera";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::NotVisible: return "NotVisible";
    case ErrorCode::NoFeatures: return "NoFeatures";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::EmptySilhouette: return "EmptySilhouette";
    case ErrorCode::EmptySegment: return "EmptySegment";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::NoObjectPixels: return "NoObjectPixels";
    case ErrorCode::EmptyConfig: return "EmptyConfig";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace lfv
