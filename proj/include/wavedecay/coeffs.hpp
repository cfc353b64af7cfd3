#pragma once

#include <string>
#include <vector>

#include "wavedecay/errors.hpp"

namespace wavedecay::coeffs {

// Radial factor w(r) of a coefficient. Every shape is bounded in magnitude by
// <r>^{-k}, where k is the envelope power its slot declares (1 + sigma for the
// metric perturbation and the first-order term, 2 + sigma for the potential)
// and <r> = (1 + r^2)^{1/2}.
enum class ShapeKind {
  Flat,          // identically zero
  InversePower,  // <r>^{-k} exactly
  Oscillatory,   // cos(r) * <r>^{-k}
  CompactBump,   // smooth bump supported in r <= 8, times <r>^{-k}
};

// Bounded time modulation a(t). |a| <= 1 for all t >= 0, so the radial
// envelope bound holds uniformly in time.
enum class TimeMod {
  None,         // a = 1
  InverseTime,  // a = (1 + t)^{-1}
  Sin,          // a = (2 + sin t) / 3
};

// One coefficient slot: value(t, r) = amplitude * a(t) * w(r).
struct CoefficientShape {
  ShapeKind kind = ShapeKind::Flat;
  double amplitude = 0.0;
  TimeMod time_mod = TimeMod::None;
};

// Asymptotically flat background for the operator
//   P = (m + h)^{ab} d_a d_b + B^a d_a + V
// reduced to spherical symmetry, driving the problem P phi = mu phi^{p+1}.
// g_omega multiplies the angular Laplacian, which annihilates radial
// functions; the slot is carried so profiles can declare it, but the solver
// never reads it (a nonzero amplitude draws a warning there, not an error).
struct BackgroundProfile {
  double sigma = 1.0;    // decay increment of the flatness envelopes
  double epsilon = 0.1;  // smallness budget for the annulus sums

  CoefficientShape h;        // metric perturbation, envelope <r>^{-1-sigma}
  CoefficientShape b;        // first-order coefficient, envelope <r>^{-1-sigma}
  CoefficientShape v;        // potential, envelope <r>^{-2-sigma}
  CoefficientShape g_omega;  // angular coefficient; inert under radial reduction

  int mu_sign = 0;  // +1 defocusing, -1 focusing, 0 drops the nonlinearity
  int power_p = 4;  // nonlinearity exponent p; the source term is phi^{p+1}
};

// ConfigError unless sigma > 0, epsilon > 0, mu_sign in {-1, 0, +1},
// power_p >= 2.
void validate(const BackgroundProfile& profile);

// True when the inert angular slot is actually populated.
bool has_angular(const BackgroundProfile& profile);

struct Coefficients {
  double h = 0.0;
  double b = 0.0;
  double v = 0.0;
};

// Pointwise slot value amplitude * a(t) * w(r) with envelope power k.
// Total on t >= 0, r >= 0; finite at r = 0; smooth in r.
double eval_shape(const CoefficientShape& shape, double envelope_power,
                  double t, double r);

// The separable factors of eval_shape: eval = time_factor * radial_part.
// Exposed so the solver can freeze radial tables and rescale them per step.
double time_factor(TimeMod mod, double t);
double radial_part(const CoefficientShape& shape, double envelope_power,
                   double r);

// Scalar radial reductions of (h, B, V) at (t, r). Total function; the flat
// profile gives (0, 0, 0) everywhere.
Coefficients eval_coefficients(const BackgroundProfile& profile, double t,
                               double r);

// Dyadic-annulus flatness sums over A_j = {2^j <= r <= 2^{j+1}}, truncated at
// j_max:
//   sum_h = sum_j sup_{A_j} ( <r>^2 |d2 h| + <r> |d h| + |h| )
//   sum_b = sum_j sup_{A_j} ( <r>^2 |d B| + <r> |B| )
//   sum_v = sum_j sup_{A_j}   <r>^2 |V|
// together with the global sup of r^2 |V| over the whole grid. First and
// second derivatives are taken in both t and r by 2nd-order central
// differences on the supplied samples; |d f| is the max over components.
// pass means every reported quantity is <= epsilon.
//
// tail_constant C bounds the truncation error for shapes whose derivatives
// gain matching powers of <r> (InversePower, CompactBump, Flat): growing
// j_max moves each sum by less than max_amplitude * 2^{-j_max*sigma} * C.
// Oscillatory shapes are exempt: their second radial derivative keeps the
// undifferentiated envelope, so sum_h and sum_b need not converge at all.
struct BudgetReport {
  double sum_h = 0.0;
  double sum_b = 0.0;
  double sum_v = 0.0;
  double sup_r2_v = 0.0;
  double tail_constant = 0.0;
  int j_max = 0;
  bool pass = false;
};

// pre: grid covers every annulus A_j, j <= j_max, with at least 8 samples
// (GridTooCoarse otherwise). The time suprema are sampled at `times`.
BudgetReport check_flatness_budget(
    const BackgroundProfile& profile, const std::vector<double>& grid,
    int j_max, const std::vector<double>& times = {0.0, 1.0, 5.0, 25.0});

// Log-spaced grid with `per_annulus` samples in each A_j for j = 0..j_max,
// plus a few nodes below r = 1 so the origin is represented.
std::vector<double> make_dyadic_grid(int j_max, int per_annulus = 16);

// JSON profile document:
//   { "sigma": 1.0, "epsilon": 0.05, "mu_sign": 1, "power_p": 4,
//     "h": {"shape": "inverse_power", "amplitude": 0.02, "time_mod": "sin"},
//     "B": {...}, "V": {...}, "g_omega": {...} }
// sigma and epsilon are required; absent coefficient blocks mean flat;
// mu_sign defaults to 0 and power_p to 4. Unknown shape names raise
// UnknownShape, unknown time_mod names ConfigError, both at load time.
BackgroundProfile profile_from_json(const std::string& text);
BackgroundProfile load_profile(const std::string& path);

// Canonical serialization (keys sorted, shapes by name). Deterministic, so
// repeated runs of the same profile byte-match.
std::string profile_to_json(const BackgroundProfile& profile);

// FNV-1a hash of the canonical serialization, as 16 hex digits. Traces record
// it so downstream fits can refuse inputs from a different background.
std::string profile_fingerprint(const BackgroundProfile& profile);

const char* shape_name(ShapeKind kind);
const char* time_mod_name(TimeMod mod);

}  // namespace wavedecay::coeffs
