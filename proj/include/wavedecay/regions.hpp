#pragma once

// Dyadic spacetime regions, weighted space-time norms over recorded traces,
// backward-cone integrals, and numeric checks of the pointwise-decay
// inequalities. Everything here treats a trace as immutable data; all
// quadrature is flat-measure (4 pi r^2 dr in space), matching the reduction
// in which curved coefficients enter only through the solver.

#include <string>
#include <utility>
#include <vector>

#include "wavedecay/errors.hpp"
#include "wavedecay/evolve.hpp"

namespace wavedecay::regions {

using evolve::RadialState;
using evolve::SpacetimeTrace;

// Spacetime cells. Conventions:
//   u = t - r, v = t + r; dyadic parameters T, R, U are >= 1.
//   Annulus_AR:       spatial annulus R <= <r> <= 2R (R = 1: <r> <= 2).
//   ConeSlab_CTR:     T <= t <= 2T (T = 1: 0 < t < 2), r <= t, and
//                     R < r < 2R (R = 1: 0 < r < 2).
//   ConeDist_CTU:     T <= t <= 2T and U < |t-r| < 2U (U = 1: 0 < |t-r| < 2).
//   Exterior_CRT:     r >= t, T <= t <= 2T, R <= r <= 2R, R <= |r-t| <= 2R;
//                     requires R > T.
//   BackCone_Dtr:     backward cone with apex (apex_t, apex_r): points
//                     (s, rho) with -(t+r) <= s-rho <= t-r and
//                     |t-r| <= s+rho <= t+r, s >= 0, rho >= 0.
//   BackConeDyad_DtrR: the cone intersected with R < rho < 2R
//                     (R = 1: rho < 2).
struct RegionSpec {
  enum class Kind {
    Annulus_AR,
    ConeSlab_CTR,
    ConeDist_CTU,
    Exterior_CRT,
    BackCone_Dtr,
    BackConeDyad_DtrR,
  };
  Kind kind = Kind::Annulus_AR;
  double T = 1.0;
  double R = 1.0;
  double U = 1.0;
  double apex_t = 0.0;
  double apex_r = 0.0;
  // The cell geometry generalizes to bases in (2, 5]; this artifact fixes
  // base 2 everywhere and keeps the 3/8-aligned ladder only for U-cells.
  double dyadic_base = 2.0;
};

void validate(const RegionSpec& spec);

// Membership of the point (t, r); for the backward-cone kinds the arguments
// are the probe point (s, rho).
bool contains(const RegionSpec& spec, double t, double r);

std::string region_name(const RegionSpec& spec);

// U-cell ladder aligned with the 3T/4 cone cutoff: values (3/8) * 2^j
// that stay <= 3T/8.
std::vector<double> u_cell_ladder(double T);

// One computed norm. err_est is a Richardson-style estimate from
// re-quadrature on the half-resolution subgrid; it shrinks under refinement.
struct NormReport {
  std::string norm;
  std::string region;
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;
  double err_est = 0.0;
  double resolution = 0.0;
};

std::string report_to_json(const NormReport& report);

// sup over dyadic R of || <r>^{-1/2} phi ||_{L^2([t0,t1] x A_R)}.
NormReport le_norm(const SpacetimeTrace& trace, double t0, double t1);

// || d phi ||_LE + || <r>^{-1} phi ||_LE; the time derivative comes from the
// stored psi_t, the radial one from central differences on each slice.
NormReport le1_norm(const SpacetimeTrace& trace, double t0, double t1);

// sum over dyadic R >= 1 of || <r>^{1/2} phi ||_{L^2([t0,t1] x A_R)}.
NormReport le_star_norm(const SpacetimeTrace& trace, double t0, double t1);

// sup over dyadic R of || <r>^{-1/2} |d2 phi| ||_{L^2([t0,t1] x A_R)} with
// |d2 phi|^2 = phi_tt^2 + phi_tr^2 + phi_rr^2 reconstructed across slices.
// Needs slice cadence <= 2 dr (TooSparse otherwise).
NormReport d2_le_norm(const SpacetimeTrace& trace, double t0, double t1);

// ( int_{t0}^{t1} (4 pi int |phi|^10 r^2 dr)^{1/2} dt )^{1/5}.
// TooSparse when halving the slice cadence moves the time integral by
// more than 1%.
NormReport strichartz_norm(const SpacetimeTrace& trace, double t0, double t1);

// E^gamma of one slice: int r^gamma [ ((psi_t + psi_r) / (2r))^2
// + (psi / r^2)^2 ] 4 pi r^2 dr; the first entry is (d_v + 1/(2r)) phi,
// the second phi / r. gamma in (0,1).
NormReport rgamma_energy(const RadialState& slice, double gamma);

// A_gamma over [T1, T2]: int int phi^2 r^{gamma-3} + (d_v phi)^2 r^{gamma-1}
// dx dt with d_v = (d_t + d_r)/2. gamma in (0,1).
NormReport rgamma_bulk(const SpacetimeTrace& trace, double gamma, double t0,
                       double t1);

// Nearest stored slice to time t; SpanOutOfRange if no slice is within one
// storage cadence of t.
const RadialState& slice_near(const SpacetimeTrace& trace, double t);

// Weighted integral over the backward cone D with apex (apex_t, apex_r):
// int_D vplus^{vplus_exp} rho^{rho_exp} |phi|^{phi_power} ds drho, where
// vplus = <s + rho>. phi_power = 0 integrates the pure weight. dyadic_R = 0
// integrates the whole cone; R = 1 restricts to rho < 2, R > 1 to
// R < rho < 2R. Cells straddling the cone boundary are clipped exactly.
struct ConeWeight {
  double vplus_exp = 0.0;
  double rho_exp = 0.0;
  int phi_power = 0;
};

double cone_integral(const SpacetimeTrace& trace, double apex_t, double apex_r,
                     const ConeWeight& weight, double dyadic_R = 0.0);

struct InequalityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // lhs / rhs; 0 when both vanish
};

// int_{t/2}^{3t/2} <t-r>^{-2} f^2 dx  vs
// int_{t/4}^{7t/4} |d_r f|^2 dx + t^{-2} ( int_{t/4}^{t/2} f^2 dx
// + int_{3t/2}^{7t/4} f^2 dx ), f the slice field, dx = 4 pi r^2 dr.
// Requires t >= 4 dr and a grid reaching 7t/4.
InequalityReport hardy_check(const RadialState& slice, double t);

// sup_{region} |w|  vs  |region|^{-1/2} sum_{i<=2} ( ||S^i w||_{L^2(region)}
// + || mu d S^i w ||_{L^2(region)} ) with mu = <min(r, |t-r|)> and
// S = t d_t + r d_r, all reconstructed from stored slices. Supported kinds:
// ConeSlab_CTR (R <= 3T/8), ConeDist_CTU (U <= 3T/8), Exterior_CRT (R > T);
// everything else is RegionUnsupported. The rotation fields vanish
// identically in the radial reduction and are omitted.
InequalityReport region_sobolev_check(const SpacetimeTrace& trace,
                                      const RegionSpec& region);

}  // namespace wavedecay::regions
