#include "wavedecay/fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace wavedecay::fit {
namespace {

double bracket(double x) { return std::sqrt(1.0 + x * x); }

double abscissa(const evolve::CurveSample& s, FitVariable v) {
  switch (v) {
    case FitVariable::T: return bracket(s.t);
    case FitVariable::R: return bracket(s.r);
    case FitVariable::U: return bracket(s.t - s.r);
    case FitVariable::V: return bracket(s.t + s.r);
  }
  return 1.0;
}

std::string curve_label(const CurveSpec& spec) {
  char buf[64];
  switch (spec.kind) {
    case CurveSpec::Kind::RConst:
      std::snprintf(buf, sizeof(buf), "r = %g", spec.value);
      break;
    case CurveSpec::Kind::UConst:
      std::snprintf(buf, sizeof(buf), "u = %g", spec.value);
      break;
    case CurveSpec::Kind::Lambda:
      std::snprintf(buf, sizeof(buf), "r = %g t", spec.value);
      break;
  }
  return buf;
}

const char* kind_name(CurveSpec::Kind k) {
  switch (k) {
    case CurveSpec::Kind::RConst: return "r_const";
    case CurveSpec::Kind::UConst: return "u_const";
    case CurveSpec::Kind::Lambda: return "lambda";
  }
  return "?";
}

}  // namespace

std::string to_string(FitVariable v) {
  switch (v) {
    case FitVariable::T: return "t";
    case FitVariable::R: return "r";
    case FitVariable::U: return "u";
    case FitVariable::V: return "v";
  }
  return "?";
}

ExponentFit fit_exponent(const Curve& curve, FitVariable variable,
                         Window window, double noise_floor) {
  if (!(window.lo < window.hi))
    throw ConfigError("fit window is empty or reversed");
  if (noise_floor < 0.0) throw ConfigError("noise floor must be >= 0");

  std::vector<double> xs, ys;
  double amin = 1e300, amax = 0.0;
  for (const auto& s : curve.samples) {
    if (s.t < window.lo || s.t > window.hi) continue;
    const double mag = std::abs(s.phi);
    if (!(mag > 10.0 * noise_floor) || !(mag > 0.0))
      throw BelowNoiseFloor("sample at t = " + std::to_string(s.t) +
                            " sits at or below 10x the noise floor");
    const double a = abscissa(s, variable);
    amin = std::min(amin, a);
    amax = std::max(amax, a);
    xs.push_back(std::log(a));
    ys.push_back(std::log(mag));
  }
  if (xs.size() < 20)
    throw WindowTooShort("fit needs >= 20 samples, window holds " +
                         std::to_string(xs.size()));
  if (amax < 10.0 * amin)
    throw WindowTooShort("abscissa spans less than one decade");

  const auto n = static_cast<double>(xs.size());
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= n;
  ybar /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - xbar;
    const double dy = ys[i] - ybar;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double resid = (ys[i] - ybar) - slope * (xs[i] - xbar);
    ssr += resid * resid;
  }

  ExponentFit out;
  out.curve = curve.spec;
  out.variable = variable;
  out.window = window;
  out.n_samples = xs.size();
  out.slope = slope;
  out.std_error = std::sqrt(std::max(ssr, 0.0) / ((n - 2.0) * sxx));
  out.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return out;
}

ExponentFit check_resolution_pair(ExponentFit fine,
                                  const ExponentFit& coarse) {
  fine.resolution_pair_diff = std::abs(fine.slope - coarse.slope);
  fine.rejected = fine.resolution_pair_diff > 0.1;
  return fine;
}

double noise_floor(const Curve& control, Window window) {
  double floor = 0.0;
  for (const auto& s : control.samples) {
    if (s.t < window.lo || s.t > window.hi) continue;
    floor = std::max(floor, std::abs(s.phi));
  }
  return floor;
}

double predicted_slope(const calculus::DecayRate& rate, const CurveSpec& curve,
                       FitVariable variable) {
  if (rate.zero)
    throw ConfigError("the zero envelope has no finite slope to predict");
  // Which weights grow linearly with the fit abscissa along this curve: v
  // always does; r is frozen on r-const curves; u is frozen on u-const
  // curves and on the light cone r = t.
  bool grows_r = true, grows_u = true;
  switch (curve.kind) {
    case CurveSpec::Kind::RConst:
      grows_r = false;
      break;
    case CurveSpec::Kind::UConst:
      grows_u = false;
      break;
    case CurveSpec::Kind::Lambda:
      grows_u = curve.value < 1.0;
      break;
  }
  if (variable == FitVariable::R && !grows_r)
    throw ConfigError("abscissa r is constant along this curve");
  if (variable == FitVariable::U && !grows_u)
    throw ConfigError("abscissa u is constant along this curve");
  double slope = -to_double(rate.b);
  if (grows_r) slope -= to_double(rate.a);
  if (grows_u) slope -= to_double(rate.c);
  return slope;
}

ReconcileReport reconcile(const std::vector<ExponentFit>& fits,
                          const calculus::DecayRate& prediction,
                          double tolerance) {
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  ReconcileReport rep;
  rep.tolerance = tolerance;
  bool has_r = false, has_u = false, has_lambda = false;
  rep.all_rows_pass = true;
  for (const auto& f : fits) {
    CurveVerdict row;
    row.curve = f.curve;
    row.variable = f.variable;
    row.predicted = predicted_slope(prediction, f.curve, f.variable);
    row.fitted = f.slope;
    row.std_error = f.std_error;
    row.rejected = f.rejected;
    row.pass = !f.rejected &&
               std::abs(row.fitted - row.predicted) <= tolerance;
    rep.all_rows_pass = rep.all_rows_pass && row.pass;
    rep.rows.push_back(row);
    switch (f.curve.kind) {
      case CurveSpec::Kind::RConst: has_r = true; break;
      case CurveSpec::Kind::UConst: has_u = true; break;
      case CurveSpec::Kind::Lambda: has_lambda = true; break;
    }
  }
  rep.covers_canonical = has_r && has_u && has_lambda;
  rep.verdict = rep.all_rows_pass && rep.covers_canonical;
  return rep;
}

std::string report_to_json(const ReconcileReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"curve", curve_label(row.curve)},
                    {"kind", kind_name(row.curve.kind)},
                    {"value", row.curve.value},
                    {"variable", to_string(row.variable)},
                    {"predicted", row.predicted},
                    {"fitted", row.fitted},
                    {"stderr", row.std_error},
                    {"rejected", row.rejected},
                    {"pass", row.pass}});
  }
  nlohmann::json j{{"rows", rows},
                   {"tolerance", report.tolerance},
                   {"covers_canonical", report.covers_canonical},
                   {"all_rows_pass", report.all_rows_pass},
                   {"verdict", report.verdict ? "pass" : "fail"}};
  return j.dump(2);
}

std::string report_to_markdown(const ReconcileReport& report) {
  std::string out =
      "| curve | predicted | fitted | stderr | verdict |\n"
      "|-------|-----------|--------|--------|---------|\n";
  char buf[160];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f | %.3g | %s |\n",
                  curve_label(row.curve).c_str(), row.predicted, row.fitted,
                  row.std_error, row.pass ? "pass" : "fail");
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "\naggregate: %s\n",
                report.verdict ? "pass" : "fail");
  out += buf;
  return out;
}

}  // namespace wavedecay::fit
