#include "wavedecay/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wavedecay::coeffs {

namespace {

using nlohmann::json;

double jr(double r) { return std::sqrt(1.0 + r * r); }

// C^inf bump: 1 at s = 0, supported in |s| < 1.
double bump(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double radial_factor(ShapeKind kind, double k, double r) {
  switch (kind) {
    case ShapeKind::Flat:
      return 0.0;
    case ShapeKind::InversePower:
      return std::pow(jr(r), -k);
    case ShapeKind::Oscillatory:
      return std::cos(r) * std::pow(jr(r), -k);
    case ShapeKind::CompactBump:
      return bump(r / 8.0) * std::pow(jr(r), -k);
  }
  return 0.0;
}

ShapeKind shape_from_name(const std::string& name) {
  if (name == "flat") return ShapeKind::Flat;
  if (name == "inverse_power") return ShapeKind::InversePower;
  if (name == "oscillatory") return ShapeKind::Oscillatory;
  if (name == "compact_bump") return ShapeKind::CompactBump;
  throw UnknownShape("unknown shape \"" + name +
                     "\"; expected flat, inverse_power, oscillatory, or "
                     "compact_bump");
}

TimeMod time_mod_from_name(const std::string& name) {
  if (name == "none") return TimeMod::None;
  if (name == "inverse_time") return TimeMod::InverseTime;
  if (name == "sin") return TimeMod::Sin;
  throw ConfigError("unknown time_mod \"" + name +
                    "\"; expected none, inverse_time, or sin");
}

CoefficientShape shape_from_json(const json& j, const std::string& slot) {
  if (!j.is_object())
    throw ConfigError("coefficient block \"" + slot + "\" must be an object");
  CoefficientShape s;
  if (j.contains("shape"))
    s.kind = shape_from_name(j.at("shape").get<std::string>());
  s.amplitude = j.value("amplitude", 0.0);
  if (j.contains("time_mod"))
    s.time_mod = time_mod_from_name(j.at("time_mod").get<std::string>());
  return s;
}

json shape_to_json(const CoefficientShape& s) {
  return json{{"shape", shape_name(s.kind)},
              {"amplitude", s.amplitude},
              {"time_mod", time_mod_name(s.time_mod)}};
}

}  // namespace

double time_factor(TimeMod mod, double t) {
  switch (mod) {
    case TimeMod::None:
      return 1.0;
    case TimeMod::InverseTime:
      return 1.0 / (1.0 + t);
    case TimeMod::Sin:
      return (2.0 + std::sin(t)) / 3.0;
  }
  return 1.0;
}

double radial_part(const CoefficientShape& s, double envelope_power,
                   double r) {
  if (s.kind == ShapeKind::Flat || s.amplitude == 0.0) return 0.0;
  return s.amplitude * radial_factor(s.kind, envelope_power, r);
}

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Flat:
      return "flat";
    case ShapeKind::InversePower:
      return "inverse_power";
    case ShapeKind::Oscillatory:
      return "oscillatory";
    case ShapeKind::CompactBump:
      return "compact_bump";
  }
  return "flat";
}

const char* time_mod_name(TimeMod mod) {
  switch (mod) {
    case TimeMod::None:
      return "none";
    case TimeMod::InverseTime:
      return "inverse_time";
    case TimeMod::Sin:
      return "sin";
  }
  return "none";
}

void validate(const BackgroundProfile& p) {
  if (!(p.sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(p.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (p.mu_sign < -1 || p.mu_sign > 1)
    throw ConfigError("mu_sign must be -1, 0, or +1");
  if (p.power_p < 2) throw ConfigError("power_p must be at least 2");
}

bool has_angular(const BackgroundProfile& p) {
  return p.g_omega.kind != ShapeKind::Flat && p.g_omega.amplitude != 0.0;
}

double eval_shape(const CoefficientShape& s, double envelope_power, double t,
                  double r) {
  if (s.kind == ShapeKind::Flat || s.amplitude == 0.0) return 0.0;
  return time_factor(s.time_mod, t) * radial_part(s, envelope_power, r);
}

Coefficients eval_coefficients(const BackgroundProfile& p, double t,
                               double r) {
  Coefficients out;
  out.h = eval_shape(p.h, 1.0 + p.sigma, t, r);
  out.b = eval_shape(p.b, 1.0 + p.sigma, t, r);
  out.v = eval_shape(p.v, 2.0 + p.sigma, t, r);
  return out;
}

BudgetReport check_flatness_budget(const BackgroundProfile& p,
                                   const std::vector<double>& grid_in,
                                   int j_max,
                                   const std::vector<double>& times) {
  validate(p);
  if (j_max < 0) throw ConfigError("j_max must be nonnegative");
  if (times.empty())
    throw ConfigError("check_flatness_budget needs at least one sample time");

  std::vector<double> r = grid_in;
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  const std::size_t n = r.size();
  if (n < 3) throw GridTooCoarse("need at least 3 distinct radial samples");

  const double kh = 1.0 + p.sigma;
  const double kv = 2.0 + p.sigma;
  // Time step for the t-direction stencils. The modulations vary on O(1)
  // scales, so a fixed small step is second-order accurate.
  const double dt = 1e-3;

  auto value = [&](int slot, double t, double rr) {
    switch (slot) {
      case 0:
        return eval_shape(p.h, kh, t, rr);
      case 1:
        return eval_shape(p.b, kh, t, rr);
      default:
        return eval_shape(p.v, kv, t, rr);
    }
  };

  BudgetReport rep;
  rep.j_max = j_max;

  for (int j = 0; j <= j_max; ++j) {
    const double lo = std::ldexp(1.0, j);
    const double hi = std::ldexp(1.0, j + 1);
    const std::size_t first =
        std::lower_bound(r.begin(), r.end(), lo) - r.begin();
    const std::size_t last =
        std::upper_bound(r.begin(), r.end(), hi) - r.begin();
    if (last - first < 8)
      throw GridTooCoarse("annulus 2^" + std::to_string(j) + " <= r <= 2^" +
                          std::to_string(j + 1) + " holds " +
                          std::to_string(last - first) +
                          " grid samples; need at least 8");

    double sup_h = 0.0, sup_b = 0.0, sup_v = 0.0;
    for (std::size_t i = first; i < last; ++i) {
      const double w1 = jr(r[i]);
      const double w2 = 1.0 + r[i] * r[i];
      // Nodes at the ends of the whole grid have no two-sided stencil;
      // their value terms still count.
      const bool interior = i > 0 && i + 1 < n;
      for (double t : times) {
        for (int slot = 0; slot < 3; ++slot) {
          const double f = value(slot, t, r[i]);
          double d1 = 0.0, d2 = 0.0;
          if (interior && slot != 2) {
            const double hl = r[i] - r[i - 1];
            const double hr = r[i + 1] - r[i];
            const double fm = value(slot, t, r[i - 1]);
            const double fp = value(slot, t, r[i + 1]);
            const double denom = hl * hr * (hl + hr);
            const double dr1 =
                (fp * hl * hl - fm * hr * hr + f * (hr * hr - hl * hl)) /
                denom;
            const double ftp = value(slot, t + dt, r[i]);
            const double ftm = value(slot, t - dt, r[i]);
            const double dt1 = (ftp - ftm) / (2.0 * dt);
            d1 = std::max(std::abs(dr1), std::abs(dt1));
            if (slot == 0) {
              const double drr =
                  2.0 * (fm * hr - f * (hl + hr) + fp * hl) / denom;
              const double dtt = (ftp - 2.0 * f + ftm) / (dt * dt);
              const double ftr = (value(slot, t + dt, r[i + 1]) -
                                  value(slot, t + dt, r[i - 1]) -
                                  value(slot, t - dt, r[i + 1]) +
                                  value(slot, t - dt, r[i - 1])) /
                                 (2.0 * dt * (hl + hr));
              d2 = std::max({std::abs(drr), std::abs(dtt), std::abs(ftr)});
            }
          }
          if (slot == 0)
            sup_h = std::max(sup_h, w2 * d2 + w1 * d1 + std::abs(f));
          else if (slot == 1)
            sup_b = std::max(sup_b, w2 * d1 + w1 * std::abs(f));
          else
            sup_v = std::max(sup_v, w2 * std::abs(f));
        }
      }
    }
    rep.sum_h += sup_h;
    rep.sum_b += sup_b;
    rep.sum_v += sup_v;
  }

  for (std::size_t i = 0; i < n; ++i)
    for (double t : times)
      rep.sup_r2_v =
          std::max(rep.sup_r2_v, r[i] * r[i] * std::abs(value(2, t, r[i])));

  // Exact tail for the slowest slot (the potential) under an inverse-power
  // envelope is 1/(2^sigma - 1); the factor 4 absorbs the derivative-weight
  // constants of the other slots and finite-difference slop.
  rep.tail_constant =
      4.0 * std::max(1.0, 1.0 / (std::pow(2.0, p.sigma) - 1.0));
  rep.pass = rep.sum_h <= p.epsilon && rep.sum_b <= p.epsilon &&
             rep.sum_v <= p.epsilon && rep.sup_r2_v <= p.epsilon;
  return rep;
}

std::vector<double> make_dyadic_grid(int j_max, int per_annulus) {
  if (j_max < 0) throw ConfigError("j_max must be nonnegative");
  if (per_annulus < 8)
    throw ConfigError("per_annulus must be at least 8 for usable stencils");
  std::vector<double> g;
  g.reserve(8 + static_cast<std::size_t>(j_max + 1) * per_annulus + 1);
  for (int k = 0; k < 8; ++k) g.push_back(k / 8.0);
  for (int j = 0; j <= j_max; ++j) {
    const double lo = std::ldexp(1.0, j);
    for (int k = 0; k < per_annulus; ++k)
      g.push_back(lo * (1.0 + static_cast<double>(k) / per_annulus));
  }
  g.push_back(std::ldexp(1.0, j_max + 1));
  return g;
}

BackgroundProfile profile_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("profile JSON malformed: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("profile JSON must be an object");
  if (!j.contains("sigma") || !j.contains("epsilon"))
    throw ConfigError("profile needs both sigma and epsilon");

  BackgroundProfile p;
  p.sigma = j.at("sigma").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  p.mu_sign = j.value("mu_sign", 0);
  p.power_p = j.value("power_p", 4);
  if (j.contains("h")) p.h = shape_from_json(j.at("h"), "h");
  if (j.contains("B")) p.b = shape_from_json(j.at("B"), "B");
  if (j.contains("V")) p.v = shape_from_json(j.at("V"), "V");
  if (j.contains("g_omega"))
    p.g_omega = shape_from_json(j.at("g_omega"), "g_omega");
  validate(p);
  return p;
}

BackgroundProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

std::string profile_to_json(const BackgroundProfile& p) {
  json j;
  j["sigma"] = p.sigma;
  j["epsilon"] = p.epsilon;
  j["mu_sign"] = p.mu_sign;
  j["power_p"] = p.power_p;
  j["h"] = shape_to_json(p.h);
  j["B"] = shape_to_json(p.b);
  j["V"] = shape_to_json(p.v);
  j["g_omega"] = shape_to_json(p.g_omega);
  return j.dump(2);
}

std::string profile_fingerprint(const BackgroundProfile& p) {
  const std::string s = profile_to_json(p);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wavedecay::coeffs
