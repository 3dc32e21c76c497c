#pragma once

#include <stdexcept>
#include <string>

namespace ivkit {

/// Base class for all ivkit exceptions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define IVKIT_DEFINE_ERROR(NAME)                                   \
  class NAME : public Error {                                      \
   public:                                                         \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

IVKIT_DEFINE_ERROR(DimensionMismatch);
IVKIT_DEFINE_ERROR(RankDeficient);
IVKIT_DEFINE_ERROR(NonPositiveSE);
IVKIT_DEFINE_ERROR(EmptyInput);
IVKIT_DEFINE_ERROR(MissingSampleSize);
IVKIT_DEFINE_ERROR(EmptyValidSet);
IVKIT_DEFINE_ERROR(ZeroFirstStage);
IVKIT_DEFINE_ERROR(NonPositiveLambda);
IVKIT_DEFINE_ERROR(Underidentified);
IVKIT_DEFINE_ERROR(CombinatorialLimit);
IVKIT_DEFINE_ERROR(InvalidAlphas);
IVKIT_DEFINE_ERROR(GridTooCoarse);
IVKIT_DEFINE_ERROR(DegenerateK);
IVKIT_DEFINE_ERROR(WeakCurvature);
IVKIT_DEFINE_ERROR(SplitTooSmall);
IVKIT_DEFINE_ERROR(WeakInteractionInstrument);
IVKIT_DEFINE_ERROR(HomoskedasticExposure);
IVKIT_DEFINE_ERROR(NumericalOverflow);
IVKIT_DEFINE_ERROR(OptimizerDiverged);
IVKIT_DEFINE_ERROR(InvalidScenario);
IVKIT_DEFINE_ERROR(UnknownMethod);
IVKIT_DEFINE_ERROR(MethodOptionError);
IVKIT_DEFINE_ERROR(InvalidArgument);

#undef IVKIT_DEFINE_ERROR

/// Parse failure carrying a 1-based line number (0 when not applicable).
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line)
      : Error("ParseError: " + msg +
              (line > 0 ? " (line " + std::to_string(line) + ")" : "")),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace ivkit
