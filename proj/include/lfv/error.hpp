#pragma once

#include <stdexcept>
#include <string>

namespace lfv {

enum class ErrorCode {
  InvalidArgument,
  BehindCamera,
  NonPositiveDepth,
  DegenerateHomography,
  MissingFile,
  SchemaMismatch,
  CalibrationCountMismatch,
  PlaneBehindCamera,
  BadMagic,
  TruncatedFile,
  ParseError,
  EmptyCloud,
  NotVisible,
  NoFeatures,
  BadOrder,
  EmptySilhouette,
  EmptySegment,
  DegenerateBaseline,
  TooFewSamples,
  NoOverlap,
  NoObjectPixels,
  EmptyConfig,
  ConfigError,
  NumericalFailure,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so that callers (the CLI
// in particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace lfv
