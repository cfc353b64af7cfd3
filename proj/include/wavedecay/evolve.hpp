#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "wavedecay/coeffs.hpp"
#include "wavedecay/errors.hpp"

namespace wavedecay::evolve {

// psi = r * phi sampled at r_i = i * dr. psi[0] stays 0 (regularity of phi at
// the origin) and the outermost node is frozen: the domain is oversized so
// the boundary is causally disconnected from every observation point.
struct RadialState {
  double t = 0.0;
  double dr = 0.0;
  std::vector<double> psi;
  std::vector<double> psi_t;
};

// ConfigError unless dr > 0, the arrays match with length >= 16, and
// psi[0] == 0.
void validate(const RadialState& state);

// Compactly supported smooth data: phi0(r) = amplitude * profile(r) with the
// profile vanishing outside (0, support_radius). Outgoing motion sets phi1 so
// that r*phi = f(r - t) initially (an outward d'Alembert pulse); the profiles
// vanish near the origin, which keeps that mode regular.
struct CauchyData {
  enum class Shape {
    Bump,      // C^inf bump on (0, R0), peak at R0/2
    Gaussian,  // exp(-((r - R0/2) / (R0/10))^2), truncated outside (0, R0)
  };
  enum class Motion { TimeSymmetric, Outgoing };

  Shape shape = Shape::Bump;
  Motion motion = Motion::TimeSymmetric;
  double amplitude = 0.0;
  double support_radius = 1.0;

  double phi0(double r) const;
  double dphi0_dr(double r) const;
  double phi1(double r) const;
};

// Extraction curves: r = value, u = t - r = value, or r = value * t with
// value in (0, 1].
struct CurveSpec {
  enum class Kind { RConst, UConst, Lambda };
  Kind kind = Kind::RConst;
  double value = 1.0;
};

// One sample on an extraction curve; derivatives are of phi, taken live from
// the integrator state (quadratic interpolation in r). u = t - r, v = t + r.
struct CurveSample {
  double t = 0.0;
  double r = 0.0;
  double phi = 0.0;
  double dphi_t = 0.0;
  double dphi_r = 0.0;
  double s_phi = 0.0;  // t*dphi_t + r*dphi_r
};

struct Curve {
  CurveSpec spec;
  std::vector<CurveSample> samples;
};

// Vector-field values reconstructed from stored slices by central
// differences; order-2 entries are zero unless requested. Omega (rotation)
// components vanish identically on radial functions and are recorded as such
// via AugmentedCurve::omega_zero.
struct VectorFieldSample {
  double t = 0.0;
  double r = 0.0;
  double phi = 0.0;
  double dphi_t = 0.0;
  double dphi_r = 0.0;
  double s_phi = 0.0;
  double ss_phi = 0.0;
  double s_dphi_t = 0.0;
  double s_dphi_r = 0.0;
};

struct AugmentedCurve {
  CurveSpec spec;
  int order = 1;
  bool omega_zero = true;
  std::vector<VectorFieldSample> samples;
};

struct BulkPoint {
  double t = 0.0;
  double value = 0.0;
};

struct TraceMeta {
  double dr = 0.0;
  double dt = 0.0;
  double r_max = 0.0;
  double t_final = 0.0;
  std::size_t n_nodes = 0;
  std::size_t steps = 0;
  int k_store = 0;
  int k_curve = 0;
  int power_p = 4;
  int mu_sign = 0;
  double bulk_gamma = 0.0;
  double data_amplitude = 0.0;
  double data_support = 0.0;
  std::string profile_fingerprint;
  std::vector<std::string> warnings;
};

struct SpacetimeTrace {
  std::vector<RadialState> slices;  // every k_store steps, plus the final one
  std::vector<Curve> curves;
  // running value of 4*pi * int_0^t int r^{gamma-1} |phi|^{p+2} r^2 dr ds,
  // recorded on the slice cadence when bulk_gamma > 0
  std::vector<BulkPoint> bulk_history;
  std::vector<AugmentedCurve> augmented;  // filled by apply_vector_fields
  TraceMeta meta;
};

struct ObservationPlan {
  std::vector<CurveSpec> curves;
  double dr = 1.0 / 64;
  double cfl = 0.5;         // dt = cfl * dr * (1 - c_h); must be <= 0.5
  double r_max = 0.0;       // 0: support_radius + t_final + 16*dr
  int k_store = 0;          // slice cadence in steps; 0: about 64 slices
  int k_curve = 1;          // curve sample cadence in steps
  double bulk_gamma = 0.0;  // 0 disables the running bulk integral
};

// Largest admissible dt at spacing dr: cfl_factor * dr * (1 - c_h), where
// c_h = |h amplitude| bounds the perturbation of the wave speed.
double cfl_limit(const coeffs::BackgroundProfile& profile, double dr,
                 double cfl_factor = 0.5);

// One step of the 2nd-order scheme for
//   psi_tt = (1 + h) psi_rr + B psi_t + V psi - mu * r * phi^{p+1},
// phi = psi / r (the origin node uses the regular limit). psi[0] is pinned to
// zero, the outermost node is never written. Velocity-Verlet split; when
// B != 0 one corrector pass keeps the psi_t coupling 2nd order.
// errors: CflViolation; NonFinite (with the time attached); ConfigError for
// invalid states, degenerate wave speed, or an unsupported nonlinearity
// (mu_sign != 0 needs even p in {2, 4, 6}).
RadialState step(const RadialState& state,
                 const coeffs::BackgroundProfile& profile, double dt);

// psi_i = r_i * phi0(r_i), psi_t_i = r_i * phi1(r_i) on [0, r_max].
RadialState initial_state(const CauchyData& data, double dr, double r_max);

// Run the Cauchy problem to at least t_final, recording slices, curve
// samples, and (optionally) the running bulk integral. A populated angular
// slot in the profile adds a warning to the trace (it is inert radially).
// errors: ConfigError (bad plan or r_max too small for causal disconnection);
// NonFinite carrying the blow-up time.
SpacetimeTrace evolve(const CauchyData& data,
                      const coeffs::BackgroundProfile& profile, double t_final,
                      const ObservationPlan& plan);

// Reconstruct vector-field derivatives (order 1: d_t, d_r, S; order 2 adds
// S S, S d_t, S d_r) along every curve from the stored slices by central
// differences. pre: consecutive slice gaps <= 2 * dr (TooSparse otherwise).
SpacetimeTrace apply_vector_fields(const SpacetimeTrace& trace, int order);

// int (psi_t^2 + psi_r^2)/2 + mu * psi^{p+2} / ((p+2) r^p) dr with the
// staggered gradient (psi[i+1] - psi[i]) / dr. That form is the invariant of
// the semi-discrete flat static system, so the measured drift isolates the
// time discretization; used to bound scheme drift.
double discrete_energy(const RadialState& state,
                       const coeffs::BackgroundProfile& profile);

// CSV with header t,r,u,v,phi,dphi_t,dphi_r,S_phi for one extraction curve.
void write_curve_csv(const SpacetimeTrace& trace, std::size_t curve_index,
                     std::ostream& out);
void write_curve_csv(const SpacetimeTrace& trace, std::size_t curve_index,
                     const std::string& path);

// Binary slice dump: 16-byte magic "WAVEDECAYTRACE01", then u64 n_slices,
// u64 n_nodes, f64 dr, then per slice f64 t followed by psi[] and psi_t[].
// Little-endian 64-bit floats throughout.
void write_slices_binary(const SpacetimeTrace& trace, const std::string& path);
SpacetimeTrace read_slices_binary(const std::string& path);

}  // namespace wavedecay::evolve
