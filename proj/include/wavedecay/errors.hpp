#pragma once

#include <stdexcept>
#include <string>

namespace wavedecay {

// Base for every structured failure; `code()` is stable and machine-readable
// (used by the CLI to emit JSON error records).
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

#define WAVEDECAY_ERROR(NAME)                                          \
  class NAME : public Error {                                          \
  public:                                                              \
    explicit NAME(const std::string& what) : Error(#NAME, what) {}     \
  }

// config / input shape
WAVEDECAY_ERROR(ConfigError);
WAVEDECAY_ERROR(UnknownShape);
WAVEDECAY_ERROR(GridTooCoarse);
WAVEDECAY_ERROR(SpanOutOfRange);

// solver
WAVEDECAY_ERROR(CflViolation);
WAVEDECAY_ERROR(NonFinite);
WAVEDECAY_ERROR(TooSparse);

// regions / norms
WAVEDECAY_ERROR(GammaOutOfRange);
WAVEDECAY_ERROR(ApexOutOfRange);
WAVEDECAY_ERROR(RegionUnsupported);

// exponent calculus
WAVEDECAY_ERROR(EtaAtOne);
WAVEDECAY_ERROR(AlphaOutOfRange);
WAVEDECAY_ERROR(SumTooLarge);
WAVEDECAY_ERROR(SumTooSmall);
WAVEDECAY_ERROR(RegionMismatch);
WAVEDECAY_ERROR(FormMismatch);
WAVEDECAY_ERROR(GammaInsufficient);
WAVEDECAY_ERROR(LowPowerNeedsHypothesis);
WAVEDECAY_ERROR(NonTermination);
WAVEDECAY_ERROR(InvalidWeaken);

// fitting
WAVEDECAY_ERROR(WindowTooShort);
WAVEDECAY_ERROR(BelowNoiseFloor);

#undef WAVEDECAY_ERROR

// Exact-boundary collision inside the exponent calculus (eta hits 1, alpha hits
// 3, or a slot sum hits 3 exactly). Carries which input parameter should be
// nudged by the automatic retry loop: "sigma", "gamma", or "input" (weaken the
// offending input envelope instead).
class BoundaryCollision : public Error {
public:
  BoundaryCollision(std::string parameter, const std::string& what)
      : Error("BoundaryCollision", what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

private:
  std::string parameter_;
};

}  // namespace wavedecay
