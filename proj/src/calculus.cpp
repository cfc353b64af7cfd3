#include "wavedecay/calculus.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace wavedecay::calculus {

namespace {
std::string rstr(const Rat& r) { return wavedecay::to_string(r); }
const Rat kNudge(1, 1000000);
}  // namespace

// ---------------------------------------------------------------------------
// DecayRate and the weaken lattice
// ---------------------------------------------------------------------------

std::string to_string(Region r) {
  switch (r) {
    case Region::Exterior: return "exterior";
    case Region::Interior: return "interior";
    case Region::Global: return "global";
  }
  return "?";
}

std::string DecayRate::render() const {
  if (zero) return "0";
  std::string s;
  auto slot = [&](const char* w, const Rat& e) {
    if (e == Rat(0)) return;
    s += "<";
    s += w;
    s += ">^{" + rstr(-e) + "}";
  };
  slot("r", a);
  slot("v", b);
  slot("u", c);
  if (s.empty()) s = "1";
  return s;
}

namespace {
Region merge_region(Region x, Region y) {
  if (x == y) return x;
  if (x == Region::Global) return y;
  if (y == Region::Global) return x;
  throw RegionMismatch("cannot combine an exterior bound with an interior one");
}
}  // namespace

DecayRate product_envelope(const DecayRate& x, const DecayRate& y) {
  Region reg = merge_region(x.region, y.region);
  if (x.zero || y.zero) return DecayRate::zero_field(reg);
  DecayRate out;
  out.a = x.a + y.a;
  out.b = x.b + y.b;
  out.c = x.c + y.c;
  out.region = reg;
  return out;
}

DecayRate power_envelope(const DecayRate& x, long long k) {
  if (k < 1) throw ConfigError("envelope power must be >= 1");
  if (x.zero) return x;
  DecayRate out = x;
  out.a = x.a * k;
  out.b = x.b * k;
  out.c = x.c * k;
  return out;
}

DecayRate shifted(const DecayRate& x, const Rat& da, const Rat& db, const Rat& dc) {
  if (x.zero) return x;
  DecayRate out = x;
  out.a += da;
  out.b += db;
  out.c += dc;
  return out;
}

std::string to_string(Weaken m) {
  switch (m) {
    case Weaken::VToR: return "v->r";
    case Weaken::VToU: return "v->u";
    case Weaken::RToU: return "r->u";
    case Weaken::RToV: return "r->v";
    case Weaken::ConeRToV: return "cone r->v";
    case Weaken::ConeRToU: return "cone r->u";
    case Weaken::RelaxA: return "relax r";
    case Weaken::RelaxB: return "relax v";
    case Weaken::RelaxC: return "relax u";
  }
  return "?";
}

DecayRate apply_weaken(const DecayRate& x, Weaken move, const Rat& amount) {
  if (amount < Rat(0)) throw InvalidWeaken("weaken amount must be nonnegative");
  if (x.zero || amount == Rat(0)) return x;
  DecayRate out = x;
  switch (move) {
    case Weaken::VToR:  // r <= v
      out.b -= amount;
      out.a += amount;
      break;
    case Weaken::VToU:  // |u| <= v
      out.b -= amount;
      out.c += amount;
      break;
    case Weaken::RToU:  // |u| <= r, exterior only
      if (x.region != Region::Exterior)
        throw InvalidWeaken("r->u transfer needs |u| <= r, valid only in the exterior");
      out.a -= amount;
      out.c += amount;
      break;
    case Weaken::RToV:  // r ~ v, exterior only
      if (x.region != Region::Exterior)
        throw InvalidWeaken("r->v transfer needs r ~ v, valid only in the exterior");
      out.a -= amount;
      out.b += amount;
      break;
    case Weaken::ConeRToV:  // r ~ v on a cone-supported envelope
      out.a -= amount;
      out.b += amount;
      break;
    case Weaken::ConeRToU:  // |u| <= C r on a cone-supported envelope
      out.a -= amount;
      out.c += amount;
      break;
    case Weaken::RelaxA:
      out.a -= amount;
      break;
    case Weaken::RelaxB:
      out.b -= amount;
      break;
    case Weaken::RelaxC:
      out.c -= amount;
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conversion rules
// ---------------------------------------------------------------------------

Rat eta_tilde(const Rat& eta) {
  if (eta == Rat(1))
    throw EtaAtOne("<u>-exponent is exactly 1: the conversion integral is logarithmic");
  if (eta < Rat(1)) return eta - Rat(2);
  return Rat(-1);
}

Converted convert_interior(const DecayRate& src) {
  if (src.zero) return {src, {}};
  Rat sum = src.a + src.b + src.c;
  if (src.region == Region::Exterior) {
    // the u < -1 variant of this branch needs a supercritical sum
    if (sum == Rat(3))
      throw BoundaryCollision("sigma", "source exponent sum is exactly 3 (boundary between branches)");
    if (sum < Rat(3))
      throw SumTooSmall("u < -1 source with exponent sum " + rstr(sum) +
                        " < 3 belongs to the pure-r branch");
  }
  if (src.c < Rat(-1, 2))
    throw FormMismatch("<u>-exponent " + rstr(src.c) + " below -1/2; transfer mass into the u-slot first");
  if (src.a == Rat(3))
    throw BoundaryCollision("sigma", "<r>-exponent is exactly 3 (logarithmic boundary)");
  std::vector<std::string> warnings;
  if (src.a <= Rat(2))
    warnings.push_back("<r>-exponent " + rstr(src.a) +
                       " outside the stated range (2,3) u (3,inf); proceeding");
  DecayRate out;
  out.a = Rat(1);
  out.b = Rat(0);
  out.c = src.a + src.b + eta_tilde(src.c) - Rat(1);
  out.region = src.region;
  return {out, warnings};
}

DecayRate convert_exterior(const DecayRate& src) {
  if (src.zero) return src;
  if (src.region != Region::Exterior)
    throw RegionMismatch("pure-r conversion is an exterior (u < -1) rule");
  Rat sum = src.a + src.b + src.c;
  if (sum == Rat(3))
    throw BoundaryCollision("sigma", "source exponent sum is exactly 3 (boundary between branches)");
  if (sum > Rat(3))
    throw SumTooLarge("exponent sum " + rstr(sum) + " > 3: use the <u>-producing branch");
  DecayRate out;
  out.a = sum - Rat(2);
  out.b = Rat(0);
  out.c = Rat(0);
  out.region = Region::Exterior;
  return out;
}

Converted convert_dt(const DecayRate& g, bool extended) {
  if (g.zero) return {g, {}};
  if (g.b != Rat(0))
    throw FormMismatch("cone-supported source envelope must carry no <v>-factor; fold it into <r> first");
  if (g.c < Rat(-1, 2))
    throw FormMismatch("<u>-exponent " + rstr(g.c) + " below -1/2");
  if (g.a == Rat(3))
    throw BoundaryCollision("sigma", "<r>-exponent is exactly 3 (logarithmic boundary)");
  std::vector<std::string> warnings;
  if (g.a > Rat(2) && g.a < Rat(3)) {
    // stated range
  } else if (extended && g.a > Rat(3)) {
    warnings.push_back("<r>-exponent " + rstr(g.a) +
                       " beyond the stated range (2,3); extended final-iterate application");
  } else {
    throw AlphaOutOfRange("d/dt-source rule needs <r>-exponent in (2,3); have " + rstr(g.a));
  }
  DecayRate out;
  out.a = Rat(1);
  out.b = Rat(0);
  out.c = g.a + eta_tilde(g.c);
  out.region = g.region;
  return {out, warnings};
}

SourceRates source_rates(const DecayRate& phi, const DecayRate& dphi, const Rat& sigma,
                         long long p, const DecayRate* phi3) {
  if (p < 2) throw ConfigError("nonlinearity power p must be >= 2");
  const DecayRate& f3 = phi3 ? *phi3 : phi;
  Region reg = merge_region(merge_region(phi.region, dphi.region), f3.region);
  (void)reg;
  SourceRates s;
  s.g1 = shifted(phi, Rat(2) + sigma, Rat(0), Rat(0));
  s.g1_deriv_piece = shifted(dphi, Rat(1) + sigma, Rat(0), Rat(0));
  s.g2 = shifted(phi, Rat(1) + sigma, Rat(0), Rat(0));
  s.g2_cone = true;
  s.g3 = power_envelope(f3, p + 1);
  return s;
}

DecayRate derivative_gain(const DecayRate& phi) {
  if (phi.zero) return phi;
  switch (phi.region) {
    case Region::Exterior:
      // |u| <= r there, so the cone-distance weight resolves to <u>^{-1}
      return shifted(phi, Rat(0), Rat(0), Rat(1));
    case Region::Interior:
      // one <t>-power splits into <r>^{-1}<u>^{-1} against the weight
      if (phi.b < Rat(1))
        throw FormMismatch("interior derivative gain needs a full <t>^{-1} to split");
      return shifted(phi, Rat(1), Rat(-1), Rat(1));
    case Region::Global:
      throw RegionMismatch("restrict to a region before applying the derivative gain");
  }
  throw RegionMismatch("unreachable");
}

DecayRate interior_conversion(const DecayRate& rate, const std::optional<DecayRate>& prior,
                              const Rat& delta) {
  if (rate.zero) return rate;
  if (rate.region != Region::Interior)
    throw RegionMismatch("the r->t upgrade is an interior (u > 1) rule");
  if (!(rate.a == Rat(1) && rate.b == Rat(0)))
    throw FormMismatch("expects <r>^{-1}<u>^{-c} form; have " + rate.render());
  if (!prior)
    throw FormMismatch("no prior <t>-form: the base case comes from the seed estimate, not this rule");
  if (prior->zero || prior->region != Region::Interior ||
      !(prior->a == Rat(0) && prior->b == Rat(1)))
    throw FormMismatch("prior must be a <t>^{-1}<u>^{-c} interior bound; have " + prior->render());
  if (!(delta > Rat(0))) throw FormMismatch("ladder step must be positive; have " + rstr(delta));
  if (prior->c != rate.c - delta)
    throw FormMismatch("prior rung " + rstr(prior->c) + " does not sit delta = " + rstr(delta) +
                       " below " + rstr(rate.c));
  DecayRate out;
  out.a = Rat(0);
  out.b = Rat(1);
  out.c = rate.c;
  out.region = Region::Interior;
  return out;
}

RpSeeds rp_gain_rate(const Rat& gamma) {
  if (gamma <= Rat(0)) throw GammaOutOfRange("gamma must be positive");
  if (gamma == Rat(1))
    throw GammaOutOfRange("gamma = 1 is the excluded boundary of the weighted estimate");
  RpSeeds s;
  if (gamma < Rat(1)) {
    s.interior = DecayRate{Rat(1), Rat(0), gamma / Rat(2) - Rat(1, 2), Region::Interior};
    s.exterior = DecayRate{Rat(1, 2) + gamma / Rat(2), Rat(0), Rat(0), Region::Exterior};
  } else {
    // refined alternative for gamma > 1
    Rat c = (gamma - Rat(1)) / Rat(2);
    s.interior = DecayRate{Rat(1), Rat(0), c, Region::Interior};
    s.exterior = DecayRate{Rat(1), Rat(0), c, Region::Exterior};
  }
  return s;
}

FinalRate final_rate(const Rat& sigma, long long p, bool gamma_hypothesis) {
  if (p < 2) throw ConfigError("nonlinearity power p must be >= 2");
  if (sigma <= Rat(0)) throw ConfigError("sigma must be positive");
  if ((p == 2 || p == 3) && !gamma_hypothesis)
    throw LowPowerNeedsHypothesis(p == 2 ? "p = 2 needs the gamma > 1 extra-decay hypothesis"
                                         : "p = 3 needs the gamma > 1/2 extra-decay hypothesis");
  FinalRate f;
  f.b_v = Rat(1);
  f.c_u = Rat(1) + rat_min(sigma, Rat(p - 2));
  // the two statements of the rate agree identically
  if (f.c_u != rat_min(Rat(1) + sigma, Rat(p - 1)))
    throw NonTermination("rate identity violated (internal)");
  return f;
}

// ---------------------------------------------------------------------------
// Iteration drivers
// ---------------------------------------------------------------------------

std::string to_string(Component c) {
  switch (c) {
    case Component::Combined: return "combined";
    case Component::Derivative: return "derivative";
    case Component::Phi1: return "phi1";
    case Component::Phi2: return "phi2";
    case Component::Phi3: return "phi3";
  }
  return "?";
}

std::string to_string(Rule r) {
  switch (r) {
    case Rule::Seed: return "seed";
    case Rule::Weaken: return "weaken";
    case Rule::Cap: return "cap";
    case Rule::DerivativeGain: return "derivative_gain";
    case Rule::ConvertInterior: return "convert_interior";
    case Rule::ConvertExterior: return "convert_exterior";
    case Rule::ConvertDt: return "convert_dt";
    case Rule::SourceG1: return "source_g1";
    case Rule::SourceG2: return "source_g2";
    case Rule::SourceG3: return "source_g3";
    case Rule::Combine: return "combine";
    case Rule::TConversion: return "t_conversion";
    case Rule::Terminal: return "terminal";
    case Rule::Nudge: return "nudge";
  }
  return "?";
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Seed: return "seed";
    case Stage::WeakenedSeed: return "weakened_seed";
    case Stage::Gain: return "gain";
    case Stage::RPhase: return "r_phase";
    case Stage::Plateau: return "plateau";
    case Stage::UPhase: return "u_phase";
    case Stage::UConversion: return "u_conversion";
    case Stage::ChannelFinal: return "channel_final";
    case Stage::Terminal: return "terminal";
    case Stage::Note: return "note";
  }
  return "?";
}

std::vector<const LogEntry*> IterationLog::find(Stage stage) const {
  std::vector<const LogEntry*> out;
  for (const auto& e : entries)
    if (e.stage == stage) out.push_back(&e);
  return out;
}

const LogEntry* IterationLog::find_one(Stage stage, Component comp) const {
  for (const auto& e : entries)
    if (e.stage == stage && e.component == comp) return &e;
  return nullptr;
}

namespace {

struct Driver {
  Region region;
  Rat sigma_in, gamma_in;  // user inputs; the terminal rate is stated for these
  long long p;
  IterationOptions opts;

  // effective values for the current attempt (collision nudges move them)
  Rat sigma_o;  // original-sigma role
  Rat gamma;
  Rat sigma;    // reduced ladder sigma = min(sigma_o, 2/5)
  Rat sigma_p;  // ladder increment sigma'
  bool relax_phi3 = false;

  // the weighted-channel seed keeps standing across rounds; the nonlinear
  // channel feeds on whichever envelope is pointwise stronger
  DecayRate seed3;

  IterationLog log;
  std::vector<LogEntry> carry;  // nudge markers that survive restarts
  int step = 0;
  int nudges = 0;

  Driver(Region reg, const Rat& s, const Rat& g, long long p_, const IterationOptions& o)
      : region(reg), sigma_in(s), gamma_in(g), p(p_), opts(o), sigma_o(s), gamma(g) {}

  static bool dominates(const DecayRate& x, const DecayRate& y) {
    if (x.zero || y.zero) return false;
    return x.a >= y.a && x.b >= y.b && x.c >= y.c;
  }

  DecayRate best3(const DecayRate& rung) const {
    return dominates(seed3, rung) ? seed3 : rung;
  }

  LogEntry& add(Component comp, Rule rule, Stage stage, std::vector<DecayRate> in,
                const DecayRate& out) {
    LogEntry e;
    e.step = step;
    e.component = comp;
    e.rule = rule;
    e.stage = stage;
    e.inputs = std::move(in);
    e.output = out;
    e.p = p;
    log.entries.push_back(std::move(e));
    return log.entries.back();
  }

  void note(const std::string& text) {
    LogEntry e;
    e.step = step;
    e.rule = Rule::Nudge;
    e.stage = Stage::Note;
    e.note = text;
    e.output = DecayRate::zero_field(region);
    log.entries.push_back(std::move(e));
  }

  DecayRate weaken(Component comp, Stage st, const DecayRate& x, Weaken m, const Rat& amt,
                   const std::string& why, Rule rule = Rule::Weaken) {
    DecayRate out = apply_weaken(x, m, amt);
    if (amt != Rat(0)) {
      auto& e = add(comp, rule, st, {x}, out);
      e.move = m;
      e.amount = amt;
      e.note = why;
    }
    return out;
  }

  // Conversion with collision re-attribution: the driver knows which global
  // parameter controls the exponents at this site.
  DecayRate convert(Component comp, Stage st, Rule rule, const DecayRate& src,
                    const std::string& param, bool extended = false,
                    const std::string& why = "") {
    try {
      DecayRate out;
      std::vector<std::string> warnings;
      switch (rule) {
        case Rule::ConvertExterior:
          out = convert_exterior(src);
          break;
        case Rule::ConvertInterior: {
          Converted cv = convert_interior(src);
          out = cv.rate;
          warnings = std::move(cv.warnings);
          break;
        }
        case Rule::ConvertDt: {
          Converted cv = convert_dt(src, extended);
          out = cv.rate;
          warnings = std::move(cv.warnings);
          break;
        }
        default:
          throw NonTermination("bad conversion rule (internal)");
      }
      auto& e = add(comp, rule, st, {src}, out);
      e.dt_extended = extended;
      e.warnings = std::move(warnings);
      e.note = why;
      return out;
    } catch (const BoundaryCollision& bc) {
      throw BoundaryCollision(param, bc.what());
    } catch (const EtaAtOne& ea) {
      throw BoundaryCollision(param, ea.what());
    }
  }

  std::string phi3_param(bool round1, bool rphase) const {
    if (p == 2) return "input";  // the p+1 = 3 boundary does not involve sigma or gamma
    if (round1) return p >= 5 ? "input" : "gamma";
    if (p >= 5) return "sigma";
    if (rphase && Rat(2) * gamma < sigma) return "gamma";
    return "sigma";
  }

  // In relax mode, exact exponent boundaries in the phi3 channel are dodged by
  // weakening the envelope slightly (the nonlinear channel has no tunable
  // parameter at these sites).
  DecayRate dodge(const DecayRate& env, Stage st) {
    if (!relax_phi3 || env.zero) return env;
    DecayRate out = env;
    if (out.a == Rat(3) || (region == Region::Exterior && out.a + out.b + out.c == Rat(3)))
      out = weaken(Component::Phi3, st, out, Weaken::RelaxA, kNudge, "exact-boundary dodge");
    if (out.c == Rat(1))
      out = weaken(Component::Phi3, st, out, Weaken::RelaxC, kNudge, "exact-boundary dodge");
    return out;
  }

  DecayRate combine(std::vector<DecayRate> ins, Stage st) {
    DecayRate out = ins.front();
    bool same_bc = true, same_ab = true;
    for (const auto& r : ins) {
      same_bc = same_bc && r.b == out.b && r.c == out.c;
      same_ab = same_ab && r.a == out.a && r.b == out.b;
    }
    if (same_bc) {
      for (const auto& r : ins) out.a = rat_min(out.a, r.a);
    } else if (same_ab) {
      for (const auto& r : ins) out.c = rat_min(out.c, r.c);
    } else {
      throw NonTermination("combine over mixed envelope shapes (internal)");
    }
    add(Component::Combined, Rule::Combine, st, std::move(ins), out);
    return out;
  }

  struct Seeds {
    DecayRate phi, dphi, phi3;
  };

  Seeds make_seeds() {
    Seeds s;
    if (region == Region::Exterior) {
      s.phi = DecayRate{Rat(1), Rat(0), Rat(-1, 2), Region::Exterior};
      s.dphi = DecayRate{Rat(1), Rat(0), Rat(1, 2), Region::Exterior};
      if (p >= 5)
        s.phi3 = s.phi;
      else if (gamma < Rat(1))
        s.phi3 = DecayRate{Rat(1), Rat(0), gamma / Rat(2) - Rat(1, 2), Region::Exterior};
      else
        s.phi3 = DecayRate{Rat(1), Rat(0), (gamma - Rat(1)) / Rat(2), Region::Exterior};
    } else {
      s.phi = DecayRate{Rat(0), Rat(1), Rat(-1, 2), Region::Interior};
      s.dphi = DecayRate{Rat(1), Rat(0), Rat(1, 2), Region::Interior};
      if (p >= 5)
        s.phi3 = s.phi;
      else if (gamma < Rat(1))
        s.phi3 = DecayRate{Rat(0), Rat(1), gamma / Rat(2) - Rat(1, 2), Region::Interior};
      else
        s.phi3 = DecayRate{Rat(0), Rat(1), (gamma - Rat(1)) / Rat(2), Region::Interior};
    }
    return s;
  }

  void guard() {
    if (step > opts.max_steps)
      throw NonTermination("iteration exceeded " + std::to_string(opts.max_steps) + " steps");
  }

  IterationResult run_once() {
    log = IterationLog{};
    log.entries = carry;
    log.sigma_original = sigma_in;
    log.gamma = gamma_in;
    log.p = p;
    log.region = region;
    log.nudge_count = nudges;
    step = 0;
    sigma = rat_min(sigma_o, Rat(2, 5));
    sigma_p = (p >= 5) ? sigma : rat_min(Rat(2) * gamma, sigma);
    log.sigma_reduced = sigma;
    log.sigma_prime = sigma_p;
    if (sigma != sigma_o)
      note("ladder runs at sigma = min(sigma, 2/5) = " + rstr(sigma) +
           "; the final iterate restores the original");
    if (p >= 5)
      note("p >= 5: the weighted-norm channel is not needed; sigma' = sigma");
    return region == Region::Exterior ? run_exterior() : run_interior();
  }

  // ---- exterior (u < -1) ----

  IterationResult run_exterior() {
    Seeds sd = make_seeds();
    seed3 = sd.phi3;
    add(Component::Combined, Rule::Seed, Stage::Seed, {}, sd.phi).note = "u/v seed; v ~ r here";
    add(Component::Derivative, Rule::Seed, Stage::Seed, {}, sd.dphi);
    add(Component::Phi3, Rule::Seed, Stage::Seed, {}, sd.phi3).note =
        p >= 5 ? "nonlinear channel seeded by the main bound" : "weighted-norm channel seed";

    // |u| <= r: trade r-decay into the u-slot until the u-exponent clears 0
    DecayRate cur = weaken(Component::Combined, Stage::WeakenedSeed, sd.phi, Weaken::RToU,
                           Rat(1, 2), "|u| <= r");
    DecayRate cur_d = weaken(Component::Derivative, Stage::WeakenedSeed, sd.dphi, Weaken::RToU,
                             Rat(1, 2), "|u| <= r");
    DecayRate phi3_w = sd.phi3;
    if (phi3_w.c < Rat(0))
      phi3_w = weaken(Component::Phi3, Stage::WeakenedSeed, phi3_w, Weaken::RToU, -phi3_w.c,
                      "|u| <= r");

    // r-phase: climb the lattice q_n = 1/2 + n sigma' until it reaches 1
    int n = 0;
    while (true) {
      ++n;
      ++step;
      guard();
      Rat lattice = Rat(1, 2) + Rat(n) * sigma_p;
      bool landing = lattice <= Rat(1);
      Rat target = rat_min(lattice, Rat(1));
      bool cap = lattice >= Rat(1);
      Stage st = cap ? Stage::Plateau : (n == 1 ? Stage::Gain : Stage::RPhase);
      Stage chst = Stage::RPhase;

      // phi1
      DecayRate g1 = shifted(cur, Rat(2) + sigma, Rat(0), Rat(0));
      {
        auto& e = add(Component::Phi1, Rule::SourceG1, chst, {cur}, g1);
        e.sigma = sigma;
        DecayRate piece = shifted(cur_d, Rat(1) + sigma, Rat(0), Rat(0));
        e.note = "derivative piece " + piece.render() + " matches after off-cone absorption";
      }
      DecayRate o1 = convert_channel(Component::Phi1, chst, g1, "sigma");

      // phi2: differentiate the cone-supported source, then convert
      DecayRate o2 = convert_g2(chst, cur);

      // phi3
      DecayRate g3 = build_g3_exterior(n, sd, phi3_w, cur, chst);
      DecayRate o3 = convert_channel(Component::Phi3, chst, dodge(g3, chst),
                                     phi3_param(n == 1, true));

      // collapse to the pure-r ladder and combine
      auto collapse = [&](Component comp, DecayRate r) {
        if (r.c != Rat(0))
          r = weaken(comp, chst, r, Weaken::RelaxC, r.c, "collapse onto the r-ladder");
        return r;
      };
      o1 = collapse(Component::Phi1, o1);
      o2 = collapse(Component::Phi2, o2);
      o3 = collapse(Component::Phi3, o3);
      DecayRate comb = combine({o1, o2, o3}, st);
      if (comb.a < target) throw NonTermination("ladder fell below its lattice (internal)");
      if (comb.a > target)
        comb = weaken(Component::Combined, st, comb, Weaken::RelaxA, comb.a - target,
                      cap ? "cap at the <r>^{-1} plateau" : "alignment to the sigma' lattice",
                      cap ? Rule::Cap : Rule::Weaken);
      cur = comb;
      cur_d = derivative_gain(cur);
      add(Component::Derivative, Rule::DerivativeGain, st, {cur}, cur_d);
      if (landing) log.r_phase_steps++;
      if (cap) break;
    }

    // u-phase: grow <u>-decay at rate sigma until the eta > 1 plateau
    int m = 0;
    while (true) {
      ++m;
      ++step;
      guard();
      std::size_t mark = log.entries.size();
      Stage st = m == 1 ? Stage::UConversion : Stage::UPhase;
      Rat c = cur.c;

      DecayRate g1 = shifted(cur, Rat(2) + sigma, Rat(0), Rat(0));
      add(Component::Phi1, Rule::SourceG1, st, {cur}, g1).sigma = sigma;
      DecayRate o1 = convert(Component::Phi1, st, Rule::ConvertInterior, g1, "sigma");

      DecayRate g2 = shifted(cur, Rat(1) + sigma, Rat(0), Rat(0));
      add(Component::Phi2, Rule::SourceG2, st, {cur}, g2).sigma = sigma;
      DecayRate o2 = convert(Component::Phi2, st, Rule::ConvertDt, g2, "sigma");

      DecayRate b3 = best3(cur);
      DecayRate g3 = power_envelope(b3, p + 1);
      add(Component::Phi3, Rule::SourceG3, st, {b3}, g3);
      DecayRate o3 = convert(Component::Phi3, st, Rule::ConvertInterior, dodge(g3, st),
                             phi3_param(false, false));

      Rat c_next = rat_min(rat_min(o1.c, o2.c), o3.c);
      if (c_next <= c) {
        log.entries.resize(mark);
        --step;
        break;
      }
      DecayRate comb = combine({o1, o2, o3}, st);
      cur = comb;
      cur_d = derivative_gain(cur);
      add(Component::Derivative, Rule::DerivativeGain, st, {cur}, cur_d);
    }

    finalize(cur);
    DecayRate term{Rat(1), Rat(0), Rat(1) + rat_min(sigma_in, Rat(p - 2)), Region::Exterior};
    emit_terminal(term);
    return {term, log};
  }

  DecayRate build_g3_exterior(int n, const Seeds& sd, const DecayRate& phi3_w,
                              const DecayRate& cur, Stage st) {
    if (n > 1) {
      DecayRate src = best3(cur);
      DecayRate g3 = power_envelope(src, p + 1);
      add(Component::Phi3, Rule::SourceG3, st, {src}, g3);
      return g3;
    }
    if (p >= 5 || opts.h3_pure_power) {
      DecayRate g3 = power_envelope(phi3_w, p + 1);
      auto& e = add(Component::Phi3, Rule::SourceG3, st, {phi3_w}, g3);
      e.note = p >= 5 ? "pure power of the weakened seed"
                      : "pure-power first-round variant (selectable derivation)";
      return g3;
    }
    // default first-round derivation: p weighted-channel factors and one
    // u-decay factor traded out of the main seed
    DecayRate ufac = weaken(Component::Phi3, Stage::Note, sd.phi, Weaken::RToU, Rat(1),
                            "u-factor for the nonlinearity");
    DecayRate g3 = product_envelope(power_envelope(phi3_w, p), ufac);
    auto& e = add(Component::Phi3, Rule::SourceG3, st, {phi3_w, ufac}, g3);
    e.note = "p weighted-channel factors and one u-factor";
    return g3;
  }

  // Exterior dispatch for plain sources: subcritical sums go through the
  // pure-r branch, supercritical ones through the <u>-producing branch.
  DecayRate convert_channel(Component comp, Stage st, const DecayRate& env,
                            const std::string& param) {
    Rat sum = env.a + env.b + env.c;
    if (sum < Rat(3)) return convert(comp, st, Rule::ConvertExterior, env, param);
    return convert(comp, st, Rule::ConvertInterior, env, param);
  }

  // Exterior phi2: while the differentiated envelope's sum is subcritical the
  // pure-r branch applies to it; afterwards the d/dt rule takes over.
  DecayRate convert_g2(Stage st, const DecayRate& cur) {
    DecayRate g2 = shifted(cur, Rat(1) + sigma, Rat(0), Rat(0));
    DecayRate dte = shifted(g2, Rat(0), Rat(0), Rat(1));
    Rat sum = dte.a + dte.b + dte.c;
    if (sum < Rat(3)) {
      add(Component::Phi2, Rule::SourceG2, st, {cur}, dte).sigma = sigma;
      return convert(Component::Phi2, st, Rule::ConvertExterior, dte, "sigma");
    }
    if (sum == Rat(3)) throw BoundaryCollision("sigma", "differentiated source sum is exactly 3");
    add(Component::Phi2, Rule::SourceG2, st, {cur}, g2).sigma = sigma;
    return convert(Component::Phi2, st, Rule::ConvertDt, g2, "sigma");
  }

  // Final iterate at the original sigma, then the terminal statement.
  void finalize(const DecayRate& cur) {
    ++step;
    Rat so = sigma_o;
    Stage st = Stage::ChannelFinal;
    note("final iterate at the original sigma = " + rstr(so));

    DecayRate g1 = shifted(cur, Rat(2) + so, Rat(0), Rat(0));
    add(Component::Phi1, Rule::SourceG1, st, {cur}, g1).sigma = so;
    if (g1.a == Rat(3))
      g1 = weaken(Component::Phi1, st, g1, Weaken::RelaxA, kNudge,
                  "<r>-exponent boundary; this channel only");
    DecayRate o1 = convert(Component::Phi1, st, Rule::ConvertInterior, g1, "sigma");

    DecayRate g2 = shifted(cur, Rat(1) + so, Rat(0), Rat(0));
    add(Component::Phi2, Rule::SourceG2, st, {cur}, g2).sigma = so;
    if (region == Region::Interior) g2 = fold_v(Component::Phi2, st, g2, Rat(0));
    if (g2.a == Rat(3))
      g2 = weaken(Component::Phi2, st, g2, Weaken::RelaxA, kNudge,
                  "<r>-exponent boundary; this channel only");
    DecayRate o2 = convert(Component::Phi2, st, Rule::ConvertDt, g2, "sigma", true);

    DecayRate b3 = best3(cur);
    DecayRate g3 = power_envelope(b3, p + 1);
    add(Component::Phi3, Rule::SourceG3, st, {b3}, g3);
    if (region == Region::Interior) g3 = prep_and_fold_g3(st, g3);
    DecayRate o3 = convert(Component::Phi3, st, Rule::ConvertInterior, dodge(g3, st),
                           phi3_param(false, false));
    (void)o1;
    (void)o2;
    (void)o3;
  }

  void emit_terminal(const DecayRate& term) {
    ++step;
    auto& e = add(Component::Combined, Rule::Terminal, Stage::Terminal, {}, term);
    e.sigma = sigma_in;
    e.note = "min(1 + sigma, p - 1) = 1 + min(sigma, p - 2), stated for the input sigma";
    log.nudge_count = nudges;
  }

  // ---- interior (u > 1) ----

  DecayRate fold_v(Component comp, Stage st, const DecayRate& x, const Rat& keep_b) {
    if (x.b <= keep_b) return x;
    return weaken(comp, st, x, Weaken::VToR, x.b - keep_b, "r <= v: fold <v> into <r>");
  }

  DecayRate prep_and_fold_g3(Stage st, DecayRate g3) {
    if (g3.c < Rat(-1, 2))
      g3 = weaken(Component::Phi3, st, g3, Weaken::VToU, Rat(-1, 2) - g3.c,
                  "|u| <= v: raise the u-slot to -1/2");
    return fold_v(Component::Phi3, st, g3, Rat(0));
  }

  IterationResult run_interior() {
    Seeds sd = make_seeds();
    seed3 = sd.phi3;
    add(Component::Combined, Rule::Seed, Stage::Seed, {}, sd.phi).note = "u/v seed; v ~ t here";
    add(Component::Derivative, Rule::Seed, Stage::Seed, {}, sd.dphi);
    add(Component::Phi3, Rule::Seed, Stage::Seed, {}, sd.phi3).note =
        p >= 5 ? "nonlinear channel seeded by the main bound" : "weighted-norm channel seed";

    DecayRate T = sd.phi;
    DecayRate T3 = sd.phi3;

    // t-phase 1: climb c_n = n sigma' - 1/2 toward zero
    int n = 0;
    while (true) {
      ++n;
      ++step;
      guard();
      Rat lattice = Rat(n) * sigma_p - Rat(1, 2);
      bool landing = lattice <= Rat(0);
      Rat target = rat_min(lattice, Rat(0));
      bool cap = lattice >= Rat(0);
      Stage st = cap ? Stage::Plateau : (n == 1 ? Stage::Gain : Stage::RPhase);
      Stage chst = n == 1 ? Stage::UConversion : Stage::RPhase;
      round_interior(n, T, T3, target, st, chst, cap);
      T3 = best3(T);
      if (landing) log.r_phase_steps++;
      if (cap) break;
    }

    // t-phase 2: sigma-sized gains to the eta > 1 plateau
    int m = 0;
    while (true) {
      ++m;
      ++step;
      guard();
      std::size_t mark = log.entries.size();
      Stage st = Stage::UPhase;
      Rat before = T.c;
      if (!round_interior(-m, T, T3, std::nullopt, st, st, false) || T.c <= before) {
        log.entries.resize(mark);
        --step;
        break;
      }
      T3 = best3(T);
    }

    finalize(T);
    DecayRate term{Rat(0), Rat(1), Rat(1) + rat_min(sigma_in, Rat(p - 2)), Region::Interior};
    emit_terminal(term);
    return {term, log};
  }

  // One interior round; returns false when no improvement was possible.
  // `target` set: phase-1 lattice round (align down to it). Unset: free round.
  bool round_interior(int tag, DecayRate& T, const DecayRate& T3,
                      std::optional<Rat> target, Stage st, Stage chst, bool cap) {
    bool first = tag == 1;

    DecayRate g1 = shifted(T, Rat(2) + sigma, Rat(0), Rat(0));
    {
      auto& e = add(Component::Phi1, Rule::SourceG1, chst, {T}, g1);
      e.sigma = sigma;
      e.note = "derivative piece dominated after off-cone absorption";
    }
    DecayRate o1 = convert(Component::Phi1, chst, Rule::ConvertInterior, g1, "sigma");

    DecayRate g2 = shifted(T, Rat(1) + sigma, Rat(0), Rat(0));
    DecayRate o2;
    if (T.c < Rat(0)) {
      DecayRate dte = shifted(g2, Rat(0), Rat(0), Rat(1));
      add(Component::Phi2, Rule::SourceG2, chst, {T}, dte).sigma = sigma;
      DecayRate folded = fold_v(Component::Phi2, chst, dte, Rat(0));
      o2 = convert(Component::Phi2, chst, Rule::ConvertInterior, folded, "sigma");
    } else {
      add(Component::Phi2, Rule::SourceG2, chst, {T}, g2).sigma = sigma;
      DecayRate folded = fold_v(Component::Phi2, chst, g2, Rat(0));
      o2 = convert(Component::Phi2, chst, Rule::ConvertDt, folded, "sigma");
    }

    DecayRate g3 = power_envelope(T3, p + 1);
    add(Component::Phi3, Rule::SourceG3, chst, {T3}, g3);
    DecayRate o3;
    if (first && p == 4 && gamma < Rat(1)) {
      // the literal first-round application, outside the stated alpha range
      if (g3.c < Rat(-1, 2))
        g3 = weaken(Component::Phi3, chst, g3, Weaken::VToU, Rat(-1, 2) - g3.c,
                    "|u| <= v: raise the u-slot to -1/2");
      o3 = convert(Component::Phi3, chst, Rule::ConvertInterior, g3, phi3_param(true, false));
    } else {
      g3 = prep_and_fold_g3(chst, g3);
      o3 = convert(Component::Phi3, chst, Rule::ConvertInterior, dodge(g3, chst),
                   phi3_param(first, target.has_value()));
    }

    Rat c_next = rat_min(rat_min(o1.c, o2.c), o3.c);
    if (!target && c_next <= T.c) return false;

    DecayRate comb = combine({o1, o2, o3}, st);
    if (target) {
      if (comb.c < *target) throw NonTermination("ladder fell below its lattice (internal)");
      if (comb.c > *target)
        comb = weaken(Component::Combined, st, comb, Weaken::RelaxC, comb.c - *target,
                      cap ? "cap at <u>^{0}" : "alignment to the sigma' lattice",
                      cap ? Rule::Cap : Rule::Weaken);
    }
    Rat delta = comb.c - T.c;
    DecayRate Tnew = interior_conversion(comb, T, delta);
    {
      auto& e = add(Component::Combined, Rule::TConversion, st, {comb, T}, Tnew);
      e.amount = delta;
    }
    DecayRate Td = derivative_gain(Tnew);
    add(Component::Derivative, Rule::DerivativeGain, st, {Tnew}, Td);
    T = Tnew;
    return true;
  }

  IterationResult run() {
    std::string last;
    for (int attempt = 0; attempt < 8; ++attempt) {
      try {
        return run_once();
      } catch (const BoundaryCollision& bc) {
        if (!opts.allow_nudge) throw;
        ++nudges;
        std::string param = bc.parameter();
        bool repeat = last == bc.what();
        last = bc.what();
        // a collision that survives a parameter nudge verbatim is structural:
        // fall back to weakening the nonlinear channel
        if (repeat && !relax_phi3) param = "input";
        LogEntry e;
        e.step = 0;
        e.rule = Rule::Nudge;
        e.stage = Stage::Note;
        e.output = DecayRate::zero_field(region);
        if (param == "input") {
          relax_phi3 = true;
          e.note = std::string("exact boundary (") + bc.what() +
                   "): nonlinear-channel envelopes will be weakened by 1/10^6";
        } else if (param == "gamma") {
          gamma -= kNudge;
          e.gamma = gamma;
          e.note = std::string("exact boundary (") + bc.what() + "): gamma nudged to " + rstr(gamma);
        } else {
          sigma_o -= kNudge;
          e.sigma = sigma_o;
          e.note = std::string("exact boundary (") + bc.what() + "): sigma nudged to " + rstr(sigma_o);
        }
        carry.push_back(std::move(e));
      }
    }
    throw NonTermination("could not clear exact-boundary collisions after 8 nudges");
  }
};

void validate_iterate(const Rat& sigma, const Rat& gamma, long long p) {
  if (p < 2) throw ConfigError("nonlinearity power p must be >= 2");
  if (sigma <= Rat(0)) throw ConfigError("sigma must be positive");
  if (p >= 5) return;  // the weighted channel is not needed
  if (gamma <= Rat(0)) throw GammaOutOfRange("gamma must be positive");
  if (gamma == Rat(1))
    throw GammaOutOfRange("gamma = 1 is the excluded boundary of the weighted estimate");
  if (p == 2 && gamma < Rat(1)) throw GammaInsufficient("p = 2 needs the gamma > 1 hypothesis");
  if (p == 3 && gamma <= Rat(1, 2)) throw GammaInsufficient("p = 3 needs gamma > 1/2");
  if (gamma < Rat(1) && !(gamma < Rat(2) * sigma))
    throw GammaOutOfRange("the weighted estimate needs gamma < 2*sigma");
}

}  // namespace

IterationResult iterate_exterior(const Rat& sigma, const Rat& gamma, long long p,
                                 const IterationOptions& opts) {
  validate_iterate(sigma, gamma, p);
  Driver d(Region::Exterior, sigma, gamma, p, opts);
  return d.run();
}

IterationResult iterate_interior(const Rat& sigma, const Rat& gamma, long long p,
                                 const IterationOptions& opts) {
  validate_iterate(sigma, gamma, p);
  Driver d(Region::Interior, sigma, gamma, p, opts);
  return d.run();
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

namespace {
std::string mismatch(const LogEntry& e, const DecayRate& got) {
  std::ostringstream os;
  os << "step " << e.step << " " << to_string(e.component) << "/" << to_string(e.rule)
     << ": logged " << e.output.render() << ", replay gives " << got.render();
  return os.str();
}
}  // namespace

std::string replay_check(const IterationLog& log) {
  for (const auto& e : log.entries) {
    try {
      DecayRate got;
      bool check = true;
      switch (e.rule) {
        case Rule::Seed:
        case Rule::Nudge:
          check = false;
          break;
        case Rule::Weaken:
        case Rule::Cap:
          if (e.inputs.size() != 1 || !e.move || !e.amount) return mismatch(e, e.output);
          got = apply_weaken(e.inputs[0], *e.move, *e.amount);
          break;
        case Rule::DerivativeGain:
          if (e.inputs.size() != 1) return mismatch(e, e.output);
          got = derivative_gain(e.inputs[0]);
          break;
        case Rule::ConvertInterior:
          if (e.inputs.size() != 1) return mismatch(e, e.output);
          got = convert_interior(e.inputs[0]).rate;
          break;
        case Rule::ConvertExterior:
          if (e.inputs.size() != 1) return mismatch(e, e.output);
          got = convert_exterior(e.inputs[0]);
          break;
        case Rule::ConvertDt:
          if (e.inputs.size() != 1) return mismatch(e, e.output);
          got = convert_dt(e.inputs[0], e.dt_extended).rate;
          break;
        case Rule::SourceG1:
          if (e.inputs.size() != 1 || !e.sigma) return mismatch(e, e.output);
          got = shifted(e.inputs[0], Rat(2) + *e.sigma, Rat(0), Rat(0));
          break;
        case Rule::SourceG2: {
          if (e.inputs.size() != 1 || !e.sigma) return mismatch(e, e.output);
          DecayRate env = shifted(e.inputs[0], Rat(1) + *e.sigma, Rat(0), Rat(0));
          if (e.output == env) {
            check = false;
          } else {
            got = shifted(env, Rat(0), Rat(0), Rat(1));  // differentiated form
          }
          break;
        }
        case Rule::SourceG3:
          if (e.inputs.size() == 1) {
            got = power_envelope(e.inputs[0], e.p + 1);
          } else if (e.inputs.size() == 2) {
            got = product_envelope(power_envelope(e.inputs[0], e.p), e.inputs[1]);
          } else {
            return mismatch(e, e.output);
          }
          break;
        case Rule::Combine: {
          if (e.inputs.empty()) return mismatch(e, e.output);
          got = e.inputs.front();
          bool same_bc = true, same_ab = true;
          for (const auto& r : e.inputs) {
            same_bc = same_bc && r.b == got.b && r.c == got.c;
            same_ab = same_ab && r.a == got.a && r.b == got.b;
          }
          if (same_bc)
            for (const auto& r : e.inputs) got.a = rat_min(got.a, r.a);
          else if (same_ab)
            for (const auto& r : e.inputs) got.c = rat_min(got.c, r.c);
          else
            return mismatch(e, e.output);
          break;
        }
        case Rule::TConversion:
          if (e.inputs.size() != 2 || !e.amount) return mismatch(e, e.output);
          got = interior_conversion(e.inputs[0], e.inputs[1], *e.amount);
          break;
        case Rule::Terminal: {
          if (!e.sigma) return mismatch(e, e.output);
          Rat cu = Rat(1) + rat_min(*e.sigma, Rat(e.p - 2));
          DecayRate want = log.region == Region::Exterior
                               ? DecayRate{Rat(1), Rat(0), cu, Region::Exterior}
                               : DecayRate{Rat(0), Rat(1), cu, Region::Interior};
          got = want;
          break;
        }
      }
      if (check && !(got == e.output)) return mismatch(e, got);
    } catch (const std::exception& ex) {
      std::ostringstream os;
      os << "step " << e.step << " " << to_string(e.component) << "/" << to_string(e.rule)
         << ": replay raised: " << ex.what();
      return os.str();
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {
nlohmann::json rate_json(const DecayRate& r) {
  nlohmann::json j;
  if (r.zero) {
    j["zero"] = true;
    j["region"] = to_string(r.region);
    return j;
  }
  j["a"] = rstr(r.a);
  j["b"] = rstr(r.b);
  j["c"] = rstr(r.c);
  j["region"] = to_string(r.region);
  j["render"] = r.render();
  return j;
}
}  // namespace

std::string log_to_json(const IterationLog& log) {
  nlohmann::json j;
  j["region"] = to_string(log.region);
  j["p"] = log.p;
  j["sigma"] = rstr(log.sigma_original);
  j["sigma_reduced"] = rstr(log.sigma_reduced);
  j["sigma_prime"] = rstr(log.sigma_prime);
  j["gamma"] = rstr(log.gamma);
  j["r_phase_steps"] = log.r_phase_steps;
  j["nudges"] = log.nudge_count;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : log.entries) {
    nlohmann::json je;
    je["step"] = e.step;
    je["component"] = to_string(e.component);
    je["rule"] = to_string(e.rule);
    je["stage"] = to_string(e.stage);
    if (!e.inputs.empty()) {
      nlohmann::json in = nlohmann::json::array();
      for (const auto& r : e.inputs) in.push_back(rate_json(r));
      je["inputs"] = in;
    }
    if (!(e.rule == Rule::Nudge)) je["output"] = rate_json(e.output);
    if (e.move) je["move"] = to_string(*e.move);
    if (e.amount) je["amount"] = rstr(*e.amount);
    if (e.sigma) je["sigma"] = rstr(*e.sigma);
    if (e.gamma) je["gamma"] = rstr(*e.gamma);
    if (e.dt_extended) je["extended"] = true;
    if (!e.warnings.empty()) je["warnings"] = e.warnings;
    if (!e.note.empty()) je["note"] = e.note;
    entries.push_back(je);
  }
  j["entries"] = entries;
  return j.dump(2);
}

std::string log_to_table(const IterationLog& log) {
  std::ostringstream os;
  os << "region " << to_string(log.region) << ", p = " << log.p << ", sigma = "
     << rstr(log.sigma_original) << " (ladder " << rstr(log.sigma_reduced) << ", sigma' = "
     << rstr(log.sigma_prime) << "), gamma = " << rstr(log.gamma) << "\n";
  os << "r-phase steps: " << log.r_phase_steps << ", nudges: " << log.nudge_count << "\n";
  os << "step  component   rule              stage           bound\n";
  for (const auto& e : log.entries) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-5d %-11s %-17s %-15s ", e.step,
                  to_string(e.component).c_str(), to_string(e.rule).c_str(),
                  to_string(e.stage).c_str());
    os << buf << (e.rule == Rule::Nudge ? std::string("-") : e.output.render());
    if (!e.note.empty()) os << "   [" << e.note << "]";
    for (const auto& w : e.warnings) os << "   [warn: " << w << "]";
    os << "\n";
  }
  return os.str();
}

}  // namespace wavedecay::calculus
