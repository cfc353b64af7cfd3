#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wavedecay/decay_rate.hpp"
#include "wavedecay/errors.hpp"

namespace wavedecay::calculus {

// eta-dependent shift used by the u>1 source-to-solution conversions:
//   eta < 1  ->  eta - 2
//   eta > 1  ->  -1
//   eta = 1  ->  EtaAtOne (logarithmic boundary, never silently absorbed)
Rat eta_tilde(const Rat& eta);

// Conversion result; `warnings` carries non-fatal range notes (the interior
// iteration applies the conversion once with alpha = 0 deliberately).
struct Converted {
  DecayRate rate;
  std::vector<std::string> warnings;
};

// Source envelope <r>^{-a}<v>^{-b}<u>^{-c} -> solution bound, valid for u > 1
// (and for u < -1 sources when a+b+c > 3):
//   result = <r>^{-1} <u>^{-(a + b + eta_tilde(c) - 1)}
// pre: c >= -1/2. a in (2,3) or (3,inf) is the stated range; a outside it (but
// not exactly 3) yields a warning, a == 3 raises a boundary collision.
Converted convert_interior(const DecayRate& source);

// Source envelope -> solution bound for u < -1 when a+b+c < 3:
//   result = <r>^{-(a+b+c-2)}   (pure r-form)
// errors: SumTooLarge when a+b+c > 3; BoundaryCollision at exactly 3.
DecayRate convert_exterior(const DecayRate& source);

// Cone-supported d/dt-structured source: input is the envelope of the
// undifferentiated source g (not of d/dt g); output gains one u-power over the
// plain conversion:
//   result = <r>^{-1} <u>^{-(a + eta_tilde(c))}
// Stated window 2 < a < 3. Outside it: hard AlphaOutOfRange, unless `extended`
// is set, in which case a in (3,inf) proceeds with a warning (a == 3 is always
// a boundary collision). b must be 0 (fold v-decay into r first: cone support).
Converted convert_dt(const DecayRate& g_envelope, bool extended = false);

// Envelopes of the three source channels given current solution bounds.
//   g1 = phi + (2+sigma, 0, 0)            (displayed max-envelope)
//   g1_deriv_piece = dphi + (1+sigma,0,0) (off-cone piece, dominated)
//   g2 = phi + (1+sigma, 0, 0)            (cone-supported; d/dt applied later)
//   g3 = (p+1)-fold power of phi3 (defaults to phi)
// The zero sentinel propagates to all three.
struct SourceRates {
  DecayRate g1;
  DecayRate g1_deriv_piece;
  DecayRate g2;
  bool g2_cone = true;
  DecayRate g3;
};
SourceRates source_rates(const DecayRate& phi, const DecayRate& dphi,
                         const Rat& sigma, long long p,
                         const DecayRate* phi3 = nullptr);

// Vector-field derivative gain: multiplies by mu^{-1}, mu = <min(r, |t-r|)>,
// then specializes: Exterior (|u| <= r there) -> one extra u-power; Interior
// t-forms -> one t-power trades into <r>^{-1}<u>^{-1}.
DecayRate derivative_gain(const DecayRate& phi);

// Interior r->t upgrade: rate must be <r>^{-1}<u>^{-c}, prior the matching
// t-form one rung down (c_prior = c - delta, delta > 0). Output <t>^{-1}<u>^{-c}
// carried in the v-slot. FormMismatch when the shapes or rungs do not match or
// prior is absent.
DecayRate interior_conversion(const DecayRate& rate,
                              const std::optional<DecayRate>& prior,
                              const Rat& delta);

// Nonlinear-channel seeds for a given gamma.
//   gamma in (0,1): interior <r>^{-1}<u>^{-(gamma/2 - 1/2)},
//                   exterior <r>^{-(1/2 + gamma/2)}
//   gamma > 1: the refined alternative <r>^{-1}<u>^{-(gamma-1)/2} (exterior
//              statement; interior carries the same exponents in the t-slot)
//   gamma <= 0 or gamma == 1: GammaOutOfRange.
struct RpSeeds {
  DecayRate interior;
  DecayRate exterior;
};
RpSeeds rp_gain_rate(const Rat& gamma);

// Closed-form terminal rate: c_u = 1 + min(sigma, p-2), carried against <v>^{-1}.
// p in {2,3} requires the extra-decay hypothesis flag (gamma > 1 resp. > 1/2
// established elsewhere); LowPowerNeedsHypothesis otherwise.
struct FinalRate {
  Rat b_v;
  Rat c_u;
};
FinalRate final_rate(const Rat& sigma, long long p, bool gamma_hypothesis = false);

// ---------------------------------------------------------------------------
// Iteration drivers
// ---------------------------------------------------------------------------

enum class Component { Combined, Derivative, Phi1, Phi2, Phi3 };
enum class Rule {
  Seed,
  Weaken,
  Cap,
  DerivativeGain,
  ConvertInterior,
  ConvertExterior,
  ConvertDt,
  SourceG1,
  SourceG2,
  SourceG3,
  Combine,
  TConversion,
  Terminal,
  Nudge
};
// Stage tags mark the bounds the narrative pins, so tests and the table
// renderer can locate them without counting entries.
enum class Stage {
  Seed,          // starting bounds, three per region
  WeakenedSeed,  // after the <u> <= <r> trade (exterior only)
  Gain,          // first-round combined bound (the sigma' gain) + derivative
  RPhase,        // intermediate rounds
  Plateau,       // <r>^{-1} resp. <t>^{-1} landing + derivative
  UPhase,        // intermediate u-decay rounds
  UConversion,   // first-round per-channel u-decay outputs
  ChannelFinal,  // per-channel rates of the last iterate (original sigma)
  Terminal,      // the terminal rate
  Note
};

std::string to_string(Component c);
std::string to_string(Rule r);
std::string to_string(Stage s);

struct LogEntry {
  int step = 0;  // iteration round (0 = seeds / terminal bookkeeping)
  Component component = Component::Combined;
  Rule rule = Rule::Seed;
  Stage stage = Stage::Note;
  std::vector<DecayRate> inputs;
  DecayRate output;
  // replay parameters
  std::optional<Rat> sigma, gamma, amount;
  std::optional<Weaken> move;
  long long p = 0;
  bool dt_extended = false;
  std::vector<std::string> warnings;
  std::string note;
};

struct IterationLog {
  std::vector<LogEntry> entries;
  Rat sigma_original{0}, sigma_reduced{0}, sigma_prime{0}, gamma{0};
  long long p = 4;
  Region region = Region::Exterior;
  int r_phase_steps = 0;  // full gain rounds before the plateau cap
  int nudge_count = 0;

  std::vector<const LogEntry*> find(Stage stage) const;
  const LogEntry* find_one(Stage stage, Component comp) const;
};

struct IterationOptions {
  bool allow_nudge = true;      // retry with nudged parameters on collisions
  bool h3_pure_power = false;   // select the pure-power first-round derivation
  int max_steps = 10000;        // NonTermination guard
};

struct IterationResult {
  DecayRate terminal;
  IterationLog log;
};

// Full staged iteration for u < -1 resp. u > 1. Validates gamma per p:
//   p == 4   : gamma in (0,1) needs gamma < 2*sigma (GammaOutOfRange); the
//              gamma > 1 refined seeds are also accepted
//   p == 3   : gamma > 1/2 (GammaInsufficient otherwise)
//   p == 2   : gamma > 1  (GammaInsufficient otherwise)
//   p >= 5   : gamma unused (ignored with a log note)
IterationResult iterate_exterior(const Rat& sigma, const Rat& gamma, long long p,
                                 const IterationOptions& opts = {});
IterationResult iterate_interior(const Rat& sigma, const Rat& gamma, long long p,
                                 const IterationOptions& opts = {});

// Re-applies each entry's rule to its recorded inputs and compares with the
// recorded output. Returns an empty string on success, else a description of
// the first mismatch.
std::string replay_check(const IterationLog& log);

// Serializations (deterministic).
std::string log_to_json(const IterationLog& log);
std::string log_to_table(const IterationLog& log);

}  // namespace wavedecay::calculus
