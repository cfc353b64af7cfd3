#pragma once

#include <string>

#include "wavedecay/rational.hpp"

namespace wavedecay::calculus {

// Where a bound (or a source envelope) is asserted. Exterior means u < -1
// (outside the light cone), Interior means u > 1, Global everywhere.
enum class Region { Exterior, Interior, Global };

std::string to_string(Region r);

// Pointwise envelope <r>^{-a} <v>^{-b} <u>^{-c} with exact rational exponents.
// v = t+r, u = t-r, <x> = (1+x^2)^{1/2}. Negative exponents mean growth.
// `zero` is the absorbing sentinel for the identically-zero field (conceptually
// a = b = c = +infinity); every operation propagates it.
struct DecayRate {
  Rat a{0}, b{0}, c{0};
  Region region = Region::Global;
  bool zero = false;

  static DecayRate zero_field(Region reg = Region::Global) {
    DecayRate r;
    r.region = reg;
    r.zero = true;
    return r;
  }

  bool operator==(const DecayRate& o) const {
    if (zero || o.zero) return zero == o.zero;
    return a == o.a && b == o.b && c == o.c && region == o.region;
  }

  // Rendering like "<r>^{-1}<u>^{-13/10}" (unit factors omitted).
  std::string render() const;
};

// Product of two pointwise bounds: exponents add. Regions must agree (Global
// combines with anything and keeps the narrower region).
DecayRate product_envelope(const DecayRate& x, const DecayRate& y);

// k-fold power of a bound (envelope of field^k).
DecayRate power_envelope(const DecayRate& x, long long k);

// Shift helper: adds (da, db, dc) to the exponents.
DecayRate shifted(const DecayRate& x, const Rat& da, const Rat& db, const Rat& dc);

// The explicit weaken lattice. Every implicit inequality between the weights
// <r>, <v>, <u> must go through apply_weaken so it can be validity-checked and
// logged. Moves transfer exponent mass x >= 0 from one slot to another:
//   VToR, VToU     : r <= v and |u| <= v,   valid in every region
//   RToU, RToV     : |u| <= r and r ~ v,    valid in Exterior only
//   ConeRToV,
//   ConeRToU       : r ~ v ~ t, |u| <= r on a cone-supported envelope
//   RelaxA/B/C     : drop decay from one slot (always valid; x is the drop)
enum class Weaken { VToR, VToU, RToU, RToV, ConeRToV, ConeRToU, RelaxA, RelaxB, RelaxC };

std::string to_string(Weaken m);

// Applies a move; throws InvalidWeaken when the move is not valid for the
// rate's region (cone moves are allowed anywhere because the caller asserts
// cone support of the envelope).
DecayRate apply_weaken(const DecayRate& x, Weaken move, const Rat& amount);

}  // namespace wavedecay::calculus
