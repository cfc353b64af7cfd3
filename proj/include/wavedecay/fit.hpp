#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wavedecay/decay_rate.hpp"
#include "wavedecay/errors.hpp"
#include "wavedecay/evolve.hpp"

namespace wavedecay::fit {

using evolve::Curve;
using evolve::CurveSpec;

// Abscissa choice for a log-log fit. The regression always runs against
// log<variable>, <x> = (1 + x^2)^{1/2}, so small and negative values are
// safe (u along an interior curve crosses zero).
enum class FitVariable { T, R, U, V };

std::string to_string(FitVariable v);

// Time window selecting the samples that enter a fit.
struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

// Least-squares line through (log<variable>, log|phi|) over one extraction
// curve. resolution_pair_diff/rejected are filled by check_resolution_pair
// when a coarser companion fit is available; a rejected fit never passes
// reconciliation.
struct ExponentFit {
  CurveSpec curve;
  FitVariable variable = FitVariable::T;
  Window window;
  std::size_t n_samples = 0;
  double slope = 0.0;
  double std_error = 0.0;
  double r_squared = 0.0;
  double resolution_pair_diff = 0.0;
  bool rejected = false;
};

// Fits log|phi| against log<variable> over the samples with t inside the
// window. Requires >= 20 samples spanning at least one decade in the
// abscissa (WindowTooShort otherwise) and |phi| > 10 * noise_floor
// throughout (BelowNoiseFloor otherwise; the default floor still rejects
// exact zeros, whose logs are undefined).
ExponentFit fit_exponent(const Curve& curve, FitVariable variable,
                         Window window, double noise_floor = 0.0);

// Richardson-style consistency between the two finest resolutions: stores
// |slope_fine - slope_coarse| on the fine fit and flags it as rejected when
// the difference exceeds 0.1.
ExponentFit check_resolution_pair(ExponentFit fine,
                                  const ExponentFit& coarse);

// Scheme-noise estimate: the largest |phi| the same curve shows on a
// flat-background control run inside the window. Zero when the window is
// empty.
double noise_floor(const Curve& control, Window window);

// Slope the envelope <r>^{-a}<v>^{-b}<u>^{-c} predicts for a log-log fit in
// `variable` along `curve`: each weight that grows linearly with the
// abscissa contributes its exponent (along r = const the prediction is
// -(b + c); along u = const it is -(a + b); along r = lambda*t with
// lambda < 1 all three contribute). Weights frozen by the curve drop out.
double predicted_slope(const calculus::DecayRate& rate, const CurveSpec& curve,
                       FitVariable variable);

struct CurveVerdict {
  CurveSpec curve;
  FitVariable variable = FitVariable::T;
  double predicted = 0.0;
  double fitted = 0.0;
  double std_error = 0.0;
  bool rejected = false;  // carried from the fit's resolution-pair flag
  bool pass = false;
};

struct ReconcileReport {
  std::vector<CurveVerdict> rows;
  double tolerance = 0.0;
  bool covers_canonical = false;  // r = const, u = const, and r = lambda*t
  bool all_rows_pass = false;
  bool verdict = false;  // all rows pass and the canonical curves are covered
};

// Compares each fit against the prediction at the given slope tolerance.
// Callers are expected to supply the three canonical curves; the report
// records coverage rather than failing, and the aggregate verdict requires
// it. The prediction must be a real envelope (ConfigError on the zero
// sentinel, which has no slope).
ReconcileReport reconcile(const std::vector<ExponentFit>& fits,
                          const calculus::DecayRate& prediction,
                          double tolerance = 0.3);

std::string report_to_json(const ReconcileReport& report);
std::string report_to_markdown(const ReconcileReport& report);

}  // namespace wavedecay::fit
