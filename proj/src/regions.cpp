#include "wavedecay/regions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <json.hpp>
#include <limits>
#include <sstream>

namespace wavedecay::regions {

namespace {

constexpr double kPi = 3.14159265358979323846;

double jr(double r) { return std::sqrt(1.0 + r * r); }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool empty() const { return !(hi > lo); }
};

// clipped length of the cell [rc - h/2, rc + h/2] inside [lo, hi]
double cell_clip(double rc, double h, double lo, double hi) {
  return std::max(0.0, std::min(rc + 0.5 * h, hi) - std::max(rc - 0.5 * h, lo));
}

// annulus A_R in r: <r> between R and 2R; the innermost cell is <r> <= 2
Interval annulus_bounds(double R) {
  if (R <= 1.0) return {0.0, std::sqrt(3.0)};
  return {std::sqrt(R * R - 1.0), std::sqrt(4.0 * R * R - 1.0)};
}

void check_trace(const SpacetimeTrace& tr) {
  const auto& sl = tr.slices;
  if (sl.empty()) throw ConfigError("trace holds no slices");
  const double dr = sl.front().dr;
  const std::size_t n = sl.front().psi.size();
  if (!(dr > 0.0) || n < 16) throw ConfigError("trace grid is malformed");
  for (std::size_t k = 0; k < sl.size(); ++k) {
    if (sl[k].psi.size() != n || sl[k].dr != dr)
      throw ConfigError("slices disagree on the grid");
    if (k > 0 && !(sl[k].t > sl[k - 1].t))
      throw ConfigError("slice times not monotone");
  }
}

void check_span(const SpacetimeTrace& tr, double t0, double t1) {
  if (!(t0 < t1)) throw SpanOutOfRange("need t0 < t1");
  if (t0 < tr.slices.front().t - 1e-9 || t1 > tr.slices.back().t + 1e-9)
    throw SpanOutOfRange("span [" + std::to_string(t0) + ", " +
                         std::to_string(t1) + "] outside stored slices");
}

std::vector<std::size_t> subset_indices(std::size_t count, std::size_t stride) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < count; k += stride) idx.push_back(k);
  if (idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

// midpoint-cell weights for the subset, clipped to [t0, t1]
std::vector<double> time_weights(const std::vector<RadialState>& sl,
                                 const std::vector<std::size_t>& idx,
                                 double t0, double t1) {
  const std::size_t m = idx.size();
  std::vector<double> w(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double tc = sl[idx[j]].t;
    const double lo = j == 0 ? tc : 0.5 * (sl[idx[j - 1]].t + tc);
    const double hi = j + 1 == m ? tc : 0.5 * (tc + sl[idx[j + 1]].t);
    w[j] = std::max(0.0, std::min(hi, t1) - std::max(lo, t0));
  }
  return w;
}

double phi_node(const RadialState& s, std::size_t i) {
  if (i == 0) return s.psi[1] / s.dr;  // phi(0) = psi'(0), psi odd
  return s.psi[i] / (s.dr * static_cast<double>(i));
}

double dphit_node(const RadialState& s, std::size_t i) {
  if (i == 0) return s.psi_t[1] / s.dr;
  return s.psi_t[i] / (s.dr * static_cast<double>(i));
}

// radial psi derivative that never reads the pinned outer node (its zero is
// a boundary convention, not field data)
double psi_r_node(const RadialState& s, std::size_t i) {
  const std::size_t n = s.psi.size();
  if (i + 2 >= n) return (s.psi[i] - s.psi[i - 1]) / s.dr;
  return (s.psi[i + 1] - s.psi[i - 1]) / (2.0 * s.dr);
}

double dphir_node(const RadialState& s, std::size_t i) {
  const std::size_t n = s.psi.size();
  if (i == 0 || i + 1 >= n) return 0.0;
  const double r = s.dr * static_cast<double>(i);
  return psi_r_node(s, i) / r - s.psi[i] / (r * r);
}

// quadratic fit through values at offsets (-hl, 0, +hr): derivative pair at
// the center, with the extrapolated first derivative at offset x
struct Quad3 {
  double d1 = 0.0;
  double d2 = 0.0;
  double d1_at(double x) const { return d1 + x * d2; }
};

Quad3 fit3(double fm, double f, double fp, double hl, double hr) {
  const double denom = hl * hr * (hl + hr);
  Quad3 q;
  q.d1 = (fp * hl * hl - fm * hr * hr + f * (hr * hr - hl * hl)) / denom;
  q.d2 = 2.0 * (fm * hr - f * (hl + hr) + fp * hl) / denom;
  return q;
}

// the generic [t0,t1] x band integral engine; payload(k, i) is the full
// squared integrand without the 4 pi r^2 measure or the radial weight
template <class Payload, class RWeight>
double spacetime_integral(const SpacetimeTrace& tr,
                          const std::vector<std::size_t>& tidx,
                          const std::vector<double>& tw, std::size_t rs,
                          Interval band, Payload&& payload, RWeight&& rweight) {
  const auto& sl = tr.slices;
  const double dr = sl.front().dr;
  const std::size_t n = sl.front().psi.size();
  const double h = dr * static_cast<double>(rs);
  double total = 0.0;
  for (std::size_t j = 0; j < tidx.size(); ++j) {
    if (tw[j] == 0.0) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; i += rs) {
      const double r = dr * static_cast<double>(i);
      const double wc = cell_clip(r, h, band.lo, band.hi);
      if (wc == 0.0) continue;
      const double measure = wc * 4.0 * kPi * r * r;
      if (measure == 0.0) continue;
      s += measure * rweight(r) * payload(tidx[j], i);
    }
    total += tw[j] * s;
  }
  return total;
}

std::vector<double> dyadic_radii(double r_max) {
  std::vector<double> rs{1.0};
  for (double R = 2.0; annulus_bounds(R).lo < r_max; R *= 2.0) rs.push_back(R);
  return rs;
}

enum class Assemble { Sup, Sum };

// le-family norms: per-annulus L^2, then sup or sum of the square roots
template <class Payload, class RWeight>
double annulus_norm(const SpacetimeTrace& tr, double t0, double t1,
                    std::size_t rstride, std::size_t tstride, Assemble mode,
                    Payload&& payload, RWeight&& rweight) {
  const auto tidx = subset_indices(tr.slices.size(), tstride);
  const auto tw = time_weights(tr.slices, tidx, t0, t1);
  const double r_max =
      tr.slices.front().dr *
      static_cast<double>(tr.slices.front().psi.size() - 1);
  double acc = 0.0;
  for (double R : dyadic_radii(r_max)) {
    const double val = std::sqrt(spacetime_integral(
        tr, tidx, tw, rstride, annulus_bounds(R), payload, rweight));
    acc = mode == Assemble::Sup ? std::max(acc, val) : acc + val;
  }
  return acc;
}

NormReport make_report(std::string norm, std::string region, double t0,
                       double t1, double value, double coarse, double dr) {
  NormReport rep;
  rep.norm = std::move(norm);
  rep.region = std::move(region);
  rep.t0 = t0;
  rep.t1 = t1;
  rep.value = value;
  rep.err_est = std::abs(value - coarse);
  rep.resolution = dr;
  return rep;
}

// second-derivative payload across slices; uses the nearest interior time
// stencil and extrapolates first derivatives to the requested slice time
double d2_payload(const SpacetimeTrace& tr, std::size_t k, std::size_t i) {
  const auto& sl = tr.slices;
  const std::size_t last = sl.size() - 1;
  const std::size_t kk = std::min(std::max<std::size_t>(k, 1), last - 1);
  const double hl = sl[kk].t - sl[kk - 1].t;
  const double hr = sl[kk + 1].t - sl[kk].t;
  const double off = sl[k].t - sl[kk].t;

  const Quad3 qt = fit3(phi_node(sl[kk - 1], i), phi_node(sl[kk], i),
                        phi_node(sl[kk + 1], i), hl, hr);
  const double phi_tt = qt.d2;
  const Quad3 qr = fit3(dphir_node(sl[kk - 1], i), dphir_node(sl[kk], i),
                        dphir_node(sl[kk + 1], i), hl, hr);
  const double phi_tr = qr.d1_at(off);

  const std::size_t n = sl[k].psi.size();
  double phi_rr = 0.0;
  if (i >= 1 && i + 1 < n) {
    const double dr = sl[k].dr;
    const double r = dr * static_cast<double>(i);
    const double psi = sl[k].psi[i];
    // shift the stencil inward at the edge so it never reads the pinned
    // outer node
    const std::size_t c = std::min(i, n - 3);
    const double psi_r = (sl[k].psi[c + 1] - sl[k].psi[c - 1]) / (2.0 * dr);
    const double psi_rr =
        (sl[k].psi[c + 1] - 2.0 * sl[k].psi[c] + sl[k].psi[c - 1]) / (dr * dr);
    phi_rr = psi_rr / r - 2.0 * psi_r / (r * r) + 2.0 * psi / (r * r * r);
  }
  return phi_tt * phi_tt + phi_tr * phi_tr + phi_rr * phi_rr;
}

double max_slice_gap(const std::vector<RadialState>& sl) {
  double gap = 0.0;
  for (std::size_t k = 1; k < sl.size(); ++k)
    gap = std::max(gap, sl[k].t - sl[k - 1].t);
  return gap;
}

// ---- backward-cone quadrature -------------------------------------------

struct Pt {
  double x = 0.0;  // rho
  double y = 0.0;  // s
};

// keep the side a*x + b*y <= c
std::vector<Pt> clip_halfplane(const std::vector<Pt>& poly, double a, double b,
                               double c) {
  std::vector<Pt> out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Pt p = poly[i];
    const Pt q = poly[(i + 1) % m];
    const double dp = a * p.x + b * p.y - c;
    const double dq = a * q.x + b * q.y - c;
    if (dp <= 0.0) out.push_back(p);
    if ((dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0)) {
      const double s = dp / (dp - dq);
      out.push_back({p.x + s * (q.x - p.x), p.y + s * (q.y - p.y)});
    }
  }
  return out;
}

double poly_area(const std::vector<Pt>& poly, Pt* centroid) {
  if (poly.size() < 3) return 0.0;
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pt p = poly[i];
    const Pt q = poly[(i + 1) % poly.size()];
    const double cross = p.x * q.y - q.x * p.y;
    a2 += cross;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  const double area = 0.5 * std::abs(a2);
  if (centroid) {
    if (std::abs(a2) > 1e-300) {
      centroid->x = cx / (3.0 * a2);
      centroid->y = cy / (3.0 * a2);
    } else {
      *centroid = poly.front();
    }
  }
  return area;
}

// quadratic interpolation of psi on a slice at radius r, then /r
double phi_interp(const RadialState& s, double r) {
  const std::size_t n = s.psi.size();
  const double dr = s.dr;
  r = std::abs(r);  // psi is odd, phi even
  if (r < 1e-12) return s.psi[1] / dr;
  auto i = static_cast<std::size_t>(std::llround(r / dr));
  i = std::min(std::max<std::size_t>(i, 1), n - 3);
  const double x = r - dr * static_cast<double>(i);
  const double d1 = (s.psi[i + 1] - s.psi[i - 1]) / (2.0 * dr);
  const double d2 = (s.psi[i + 1] - 2.0 * s.psi[i] + s.psi[i - 1]) / (dr * dr);
  return (s.psi[i] + x * d1 + 0.5 * x * x * d2) / r;
}

// time-linear, radius-quadratic sample of phi from the slice stack
double phi_spacetime(const SpacetimeTrace& tr, double s, double r) {
  const auto& sl = tr.slices;
  auto it = std::lower_bound(
      sl.begin(), sl.end(), s,
      [](const RadialState& a, double val) { return a.t < val; });
  if (it == sl.begin()) return phi_interp(sl.front(), r);
  if (it == sl.end()) return phi_interp(sl.back(), r);
  const RadialState& hi = *it;
  const RadialState& lo = *(it - 1);
  const double w = (s - lo.t) / (hi.t - lo.t);
  return (1.0 - w) * phi_interp(lo, r) + w * phi_interp(hi, r);
}

double ipow_abs(double x, int k) {
  double y = 1.0;
  x = std::abs(x);
  while (k-- > 0) y *= x;
  return y;
}

// ---- region sections ------------------------------------------------------

Interval region_time_range(const RegionSpec& sp) {
  if (sp.kind == RegionSpec::Kind::ConeSlab_CTR && sp.T <= 1.0)
    return {0.0, 2.0};
  return {sp.T, 2.0 * sp.T};
}

std::array<Interval, 2> region_r_sections(const RegionSpec& sp, double t) {
  std::array<Interval, 2> out{};
  const Interval tr = region_time_range(sp);
  if (t < tr.lo || t > tr.hi) return out;
  switch (sp.kind) {
    case RegionSpec::Kind::ConeSlab_CTR: {
      const double lo = sp.R > 1.0 ? sp.R : 0.0;
      const double hi = sp.R > 1.0 ? 2.0 * sp.R : 2.0;
      out[0] = {lo, std::min(hi, t)};
      break;
    }
    case RegionSpec::Kind::ConeDist_CTU: {
      const double U = sp.U;
      const double lo = U == 1.0 ? 0.0 : U;
      const double hi = U == 1.0 ? 2.0 : 2.0 * U;
      out[0] = {std::max(0.0, t - hi), t - lo};
      out[1] = {t + lo, t + hi};
      break;
    }
    case RegionSpec::Kind::Exterior_CRT: {
      if (t <= sp.R) out[0] = {t + sp.R, 2.0 * sp.R};
      break;
    }
    default:
      break;
  }
  return out;
}

}  // namespace

void validate(const RegionSpec& spec) {
  using Kind = RegionSpec::Kind;
  if (!(spec.dyadic_base >= 2.0 && spec.dyadic_base <= 5.0))
    throw ConfigError("dyadic base must lie in [2, 5]");
  switch (spec.kind) {
    case Kind::Annulus_AR:
      if (!(spec.R >= 1.0)) throw ConfigError("annulus needs R >= 1");
      break;
    case Kind::ConeSlab_CTR:
      if (!(spec.T >= 1.0) || !(spec.R >= 1.0))
        throw ConfigError("cone slab needs T >= 1 and R >= 1");
      break;
    case Kind::ConeDist_CTU:
      if (!(spec.T >= 1.0) || !(spec.U > 0.0))
        throw ConfigError("cone-distance cell needs T >= 1 and U > 0");
      break;
    case Kind::Exterior_CRT:
      if (!(spec.T >= 1.0) || !(spec.R >= 1.0))
        throw ConfigError("exterior cell needs T >= 1 and R >= 1");
      if (!(spec.R > spec.T)) throw ConfigError("exterior cell needs R > T");
      break;
    case Kind::BackCone_Dtr:
    case Kind::BackConeDyad_DtrR:
      if (!(spec.apex_t >= 0.0) || !(spec.apex_r >= 0.0) ||
          !std::isfinite(spec.apex_t) || !std::isfinite(spec.apex_r))
        throw ConfigError("cone apex must be finite with t, r >= 0");
      if (spec.kind == Kind::BackConeDyad_DtrR && !(spec.R >= 1.0))
        throw ConfigError("cone band needs R >= 1");
      break;
  }
}

bool contains(const RegionSpec& spec, double t, double r) {
  using Kind = RegionSpec::Kind;
  switch (spec.kind) {
    case Kind::Annulus_AR: {
      const double x = jr(r);
      if (spec.R <= 1.0) return x <= 2.0;
      return spec.R <= x && x <= 2.0 * spec.R;
    }
    case Kind::ConeSlab_CTR: {
      const bool t_ok = spec.T > 1.0 ? (spec.T <= t && t <= 2.0 * spec.T)
                                     : (0.0 < t && t < 2.0);
      if (!t_ok || r > t) return false;
      if (spec.R > 1.0) return spec.R < r && r < 2.0 * spec.R;
      return 0.0 < r && r < 2.0;
    }
    case Kind::ConeDist_CTU: {
      if (!(spec.T <= t && t <= 2.0 * spec.T)) return false;
      const double d = std::abs(t - r);
      if (spec.U == 1.0) return 0.0 < d && d < 2.0;
      return spec.U < d && d < 2.0 * spec.U;
    }
    case Kind::Exterior_CRT: {
      if (!(r >= t) || !(spec.T <= t && t <= 2.0 * spec.T)) return false;
      if (!(spec.R <= r && r <= 2.0 * spec.R)) return false;
      const double d = r - t;
      return spec.R <= d && d <= 2.0 * spec.R;
    }
    case Kind::BackCone_Dtr:
    case Kind::BackConeDyad_DtrR: {
      // (t, r) arguments are the probe point (s, rho)
      const double s = t, rho = r;
      if (s < 0.0 || rho < 0.0) return false;
      const double u = spec.apex_t - spec.apex_r;
      const double v = spec.apex_t + spec.apex_r;
      if (!(-v <= s - rho && s - rho <= u)) return false;
      if (!(std::abs(u) <= s + rho && s + rho <= v)) return false;
      if (spec.kind == Kind::BackConeDyad_DtrR) {
        if (spec.R <= 1.0) return rho < 2.0;
        return spec.R < rho && rho < 2.0 * spec.R;
      }
      return true;
    }
  }
  return false;
}

std::string region_name(const RegionSpec& spec) {
  using Kind = RegionSpec::Kind;
  std::ostringstream os;
  switch (spec.kind) {
    case Kind::Annulus_AR:
      os << "A_R(R=" << spec.R << ")";
      break;
    case Kind::ConeSlab_CTR:
      os << "C_T^R(T=" << spec.T << ",R=" << spec.R << ")";
      break;
    case Kind::ConeDist_CTU:
      os << "C_T^U(T=" << spec.T << ",U=" << spec.U << ")";
      break;
    case Kind::Exterior_CRT:
      os << "C_R^T(T=" << spec.T << ",R=" << spec.R << ")";
      break;
    case Kind::BackCone_Dtr:
      os << "D_tr(t=" << spec.apex_t << ",r=" << spec.apex_r << ")";
      break;
    case Kind::BackConeDyad_DtrR:
      os << "D_tr^R(t=" << spec.apex_t << ",r=" << spec.apex_r
         << ",R=" << spec.R << ")";
      break;
  }
  return os.str();
}

std::vector<double> u_cell_ladder(double T) {
  if (!(T >= 1.0)) throw ConfigError("ladder needs T >= 1");
  std::vector<double> out;
  for (double u = 3.0 / 8.0; u <= 3.0 * T / 8.0 + 1e-12; u *= 2.0)
    out.push_back(u);
  return out;
}

std::string report_to_json(const NormReport& report) {
  nlohmann::json j;
  j["norm"] = report.norm;
  j["region"] = report.region;
  j["span"] = {report.t0, report.t1};
  j["value"] = report.value;
  j["err_est"] = report.err_est;
  j["resolution"] = report.resolution;
  return j.dump();
}

NormReport le_norm(const SpacetimeTrace& tr, double t0, double t1) {
  check_trace(tr);
  check_span(tr, t0, t1);
  auto payload = [&](std::size_t k, std::size_t i) {
    const double p = phi_node(tr.slices[k], i);
    return p * p;
  };
  auto w = [](double r) { return 1.0 / jr(r); };
  const double v = annulus_norm(tr, t0, t1, 1, 1, Assemble::Sup, payload, w);
  const double c = annulus_norm(tr, t0, t1, 2, 2, Assemble::Sup, payload, w);
  return make_report("le", "dyadic annuli", t0, t1, v, c,
                     tr.slices.front().dr);
}

NormReport le1_norm(const SpacetimeTrace& tr, double t0, double t1) {
  check_trace(tr);
  check_span(tr, t0, t1);
  auto grad = [&](std::size_t k, std::size_t i) {
    const double pt = dphit_node(tr.slices[k], i);
    const double pr = dphir_node(tr.slices[k], i);
    return pt * pt + pr * pr;
  };
  auto field = [&](std::size_t k, std::size_t i) {
    const double p = phi_node(tr.slices[k], i);
    return p * p;
  };
  auto w1 = [](double r) { return 1.0 / jr(r); };
  auto w3 = [](double r) { const double j = jr(r); return 1.0 / (j * j * j); };
  auto total = [&](std::size_t rs, std::size_t ts) {
    return annulus_norm(tr, t0, t1, rs, ts, Assemble::Sup, grad, w1) +
           annulus_norm(tr, t0, t1, rs, ts, Assemble::Sup, field, w3);
  };
  return make_report("le1", "dyadic annuli", t0, t1, total(1, 1), total(2, 2),
                     tr.slices.front().dr);
}

NormReport le_star_norm(const SpacetimeTrace& tr, double t0, double t1) {
  check_trace(tr);
  check_span(tr, t0, t1);
  auto payload = [&](std::size_t k, std::size_t i) {
    const double p = phi_node(tr.slices[k], i);
    return p * p;
  };
  auto w = [](double r) { return jr(r); };
  const double v = annulus_norm(tr, t0, t1, 1, 1, Assemble::Sum, payload, w);
  const double c = annulus_norm(tr, t0, t1, 2, 2, Assemble::Sum, payload, w);
  return make_report("le_star", "dyadic annuli", t0, t1, v, c,
                     tr.slices.front().dr);
}

NormReport d2_le_norm(const SpacetimeTrace& tr, double t0, double t1) {
  check_trace(tr);
  check_span(tr, t0, t1);
  if (tr.slices.size() < 3) throw TooSparse("need at least 3 stored slices");
  const double dr = tr.slices.front().dr;
  if (max_slice_gap(tr.slices) > 2.0 * dr * (1.0 + 1e-9))
    throw TooSparse("slice cadence exceeds 2*dr");
  auto payload = [&](std::size_t k, std::size_t i) {
    return d2_payload(tr, k, i);
  };
  auto w = [](double r) { return 1.0 / jr(r); };
  const double v = annulus_norm(tr, t0, t1, 1, 1, Assemble::Sup, payload, w);
  const double c = annulus_norm(tr, t0, t1, 2, 2, Assemble::Sup, payload, w);
  return make_report("le_d2", "dyadic annuli", t0, t1, v, c, dr);
}

NormReport strichartz_norm(const SpacetimeTrace& tr, double t0, double t1) {
  check_trace(tr);
  check_span(tr, t0, t1);
  const double dr = tr.slices.front().dr;
  const std::size_t n = tr.slices.front().psi.size();
  auto inner = [&](std::size_t k, std::size_t rs) {
    double s = 0.0;
    for (std::size_t i = 1; i < n; i += rs) {
      const double r = dr * static_cast<double>(i);
      const double p = phi_node(tr.slices[k], i);
      const double p2 = p * p;
      const double p10 = p2 * p2 * p2 * p2 * p2;
      s += dr * static_cast<double>(rs) * 4.0 * kPi * r * r * p10;
    }
    return std::sqrt(s);
  };
  auto integral = [&](std::size_t rs, std::size_t ts) {
    const auto tidx = subset_indices(tr.slices.size(), ts);
    const auto tw = time_weights(tr.slices, tidx, t0, t1);
    double total = 0.0;
    for (std::size_t j = 0; j < tidx.size(); ++j)
      if (tw[j] > 0.0) total += tw[j] * inner(tidx[j], rs);
    return total;
  };
  const double full = integral(1, 1);
  const double half_t = integral(1, 2);
  if (std::abs(full - half_t) > 0.01 * full + 1e-300)
    throw TooSparse("slice cadence too coarse for the L5 time integral");
  const double v = std::pow(full, 0.2);
  const double c = std::pow(integral(2, 2), 0.2);
  return make_report("strichartz", "dyadic annuli", t0, t1, v, c, dr);
}

NormReport rgamma_energy(const RadialState& slice, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw GammaOutOfRange("gamma must lie in (0, 1)");
  evolve::validate(slice);
  const double dr = slice.dr;
  const std::size_t n = slice.psi.size();
  const double r_max = dr * static_cast<double>(n - 1);
  auto compute = [&](std::size_t rs) {
    const double h = dr * static_cast<double>(rs);
    double total = 0.0;
    for (std::size_t i = rs; i + 1 < n; i += rs) {
      const double r = dr * static_cast<double>(i);
      const double wc = cell_clip(r, h, 0.0, r_max);
      const double psi_r = psi_r_node(slice, i);
      const double good = (slice.psi_t[i] + psi_r) / (2.0 * r);
      const double pr2 = slice.psi[i] / (r * r);
      total += wc * 4.0 * kPi * r * r * std::pow(r, gamma) *
               (good * good + pr2 * pr2);
    }
    return total;
  };
  NormReport rep = make_report("rgamma_energy", "{r >= 0}", slice.t, slice.t,
                               compute(1), compute(2), dr);
  return rep;
}

NormReport rgamma_bulk(const SpacetimeTrace& tr, double gamma, double t0,
                       double t1) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw GammaOutOfRange("gamma must lie in (0, 1)");
  check_trace(tr);
  check_span(tr, t0, t1);
  const double dr = tr.slices.front().dr;
  const std::size_t n = tr.slices.front().psi.size();
  auto compute = [&](std::size_t rs, std::size_t ts) {
    const auto tidx = subset_indices(tr.slices.size(), ts);
    const auto tw = time_weights(tr.slices, tidx, t0, t1);
    const double h = dr * static_cast<double>(rs);
    double total = 0.0;
    for (std::size_t j = 0; j < tidx.size(); ++j) {
      if (tw[j] == 0.0) continue;
      const RadialState& s = tr.slices[tidx[j]];
      double acc = 0.0;
      // innermost cell: integrate the r-powers exactly against the nearby
      // field values (the integrand is singular-but-integrable at r = 0)
      {
        const double p = phi_node(s, rs);
        const double dv = 0.5 * (dphit_node(s, rs) + dphir_node(s, rs));
        const double edge = 0.5 * h;
        acc += 4.0 * kPi *
               (p * p * std::pow(edge, gamma) / gamma +
                dv * dv * std::pow(edge, gamma + 2.0) / (gamma + 2.0));
      }
      for (std::size_t i = rs; i + 1 < n; i += rs) {
        const double r = dr * static_cast<double>(i);
        const double wc = cell_clip(r, h, 0.5 * h, dr * static_cast<double>(n - 1));
        if (wc == 0.0) continue;
        const double p = phi_node(s, i);
        const double dv = 0.5 * (dphit_node(s, i) + dphir_node(s, i));
        acc += wc * 4.0 * kPi *
               (p * p * std::pow(r, gamma - 1.0) +
                dv * dv * std::pow(r, gamma + 1.0));
      }
      total += tw[j] * acc;
    }
    return total;
  };
  return make_report("rgamma_bulk", "{r >= 0}", t0, t1, compute(1, 1),
                     compute(2, 2), dr);
}

const RadialState& slice_near(const SpacetimeTrace& tr, double t) {
  check_trace(tr);
  const auto& sl = tr.slices;
  std::size_t best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < sl.size(); ++k) {
    const double d = std::abs(sl[k].t - t);
    if (d < dist) {
      dist = d;
      best = k;
    }
  }
  const double tol = std::max(max_slice_gap(sl), 1e-9);
  if (dist > tol)
    throw SpanOutOfRange("no stored slice within one cadence of t = " +
                         std::to_string(t));
  return sl[best];
}

double cone_integral(const SpacetimeTrace& tr, double apex_t, double apex_r,
                     const ConeWeight& weight, double dyadic_R) {
  check_trace(tr);
  if (!(apex_t >= 0.0) || !(apex_r >= 0.0))
    throw ApexOutOfRange("apex must have t, r >= 0");
  const auto& sl = tr.slices;
  const double dr = sl.front().dr;
  const std::size_t n = sl.front().psi.size();
  const double r_max = dr * static_cast<double>(n - 1);
  const double u = apex_t - apex_r;
  const double v = apex_t + apex_r;
  if (sl.front().t > 1e-9 || sl.back().t < apex_t - 1e-9 || v > r_max + 1e-9)
    throw ApexOutOfRange("backward cone leaves the recorded trace");
  if (dyadic_R != 0.0 && !(dyadic_R >= 1.0))
    throw ConfigError("dyadic R must be 0 (whole cone), 1, or > 1");
  const double rho_lo = dyadic_R > 1.0 ? dyadic_R : 0.0;
  const double rho_hi = dyadic_R == 0.0
                            ? std::numeric_limits<double>::infinity()
                            : (dyadic_R > 1.0 ? 2.0 * dyadic_R : 2.0);

  double total = 0.0;
  for (std::size_t k = 0; k < sl.size(); ++k) {
    const double tc = sl[k].t;
    const double lo = k == 0 ? tc : 0.5 * (sl[k - 1].t + tc);
    const double hi = k + 1 == sl.size() ? tc : 0.5 * (tc + sl[k + 1].t);
    if (lo >= apex_t || hi <= 0.0) continue;
    const double s0 = std::max(lo, 0.0);
    const double s1 = std::min(hi, apex_t);
    if (!(s1 > s0)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double rc = dr * static_cast<double>(i);
      const double r0 = std::max(rc - 0.5 * dr, 0.0);
      const double r1 = std::min(rc + 0.5 * dr, r_max);
      if (!(r1 > r0) || r0 > rho_hi || r1 < rho_lo) continue;
      // fast reject against the cone's bounding strip
      if (r0 - s1 > v || s0 - r1 > u || s0 + r0 > v || s1 + r1 < std::abs(u))
        continue;
      std::vector<Pt> poly{{r0, s0}, {r1, s0}, {r1, s1}, {r0, s1}};
      poly = clip_halfplane(poly, -1.0, 1.0, u);           // s - rho <= u
      poly = clip_halfplane(poly, 1.0, -1.0, v);           // rho - s <= v
      poly = clip_halfplane(poly, 1.0, 1.0, v);            // s + rho <= v
      poly = clip_halfplane(poly, -1.0, -1.0, -std::abs(u));
      if (rho_lo > 0.0) poly = clip_halfplane(poly, -1.0, 0.0, -rho_lo);
      if (std::isfinite(rho_hi)) poly = clip_halfplane(poly, 1.0, 0.0, rho_hi);
      Pt c;
      const double area = poly_area(poly, &c);
      if (area == 0.0) continue;
      double wgt = 1.0;
      if (weight.vplus_exp != 0.0)
        wgt *= std::pow(jr(c.y + c.x), weight.vplus_exp);
      if (weight.rho_exp != 0.0) wgt *= std::pow(c.x, weight.rho_exp);
      if (weight.phi_power > 0)
        wgt *= ipow_abs(phi_spacetime(tr, c.y, c.x), weight.phi_power);
      total += area * wgt;
    }
  }
  return total;
}

InequalityReport hardy_check(const RadialState& slice, double t) {
  evolve::validate(slice);
  const double dr = slice.dr;
  const std::size_t n = slice.psi.size();
  const double r_max = dr * static_cast<double>(n - 1);
  if (!(t >= 4.0 * dr)) throw ConfigError("hardy check needs t >= 4*dr");
  if (1.75 * t > r_max + 1e-9)
    throw ConfigError("slice grid must reach 7t/4");
  double lhs = 0.0, rhs_d = 0.0, rhs_lo = 0.0, rhs_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = dr * static_cast<double>(i);
    const double f = phi_node(slice, i);
    const double fr = dphir_node(slice, i);
    const double m = 4.0 * kPi * r * r;
    const double wu = jr(t - r);
    lhs += cell_clip(r, dr, 0.5 * t, 1.5 * t) * m * f * f / (wu * wu);
    rhs_d += cell_clip(r, dr, 0.25 * t, 1.75 * t) * m * fr * fr;
    rhs_lo += cell_clip(r, dr, 0.25 * t, 0.5 * t) * m * f * f;
    rhs_hi += cell_clip(r, dr, 1.5 * t, 1.75 * t) * m * f * f;
  }
  InequalityReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs_d + (rhs_lo + rhs_hi) / (t * t);
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

InequalityReport region_sobolev_check(const SpacetimeTrace& tr,
                                      const RegionSpec& region) {
  check_trace(tr);
  validate(region);
  using Kind = RegionSpec::Kind;
  if (region.kind != Kind::ConeSlab_CTR && region.kind != Kind::ConeDist_CTU &&
      region.kind != Kind::Exterior_CRT)
    throw RegionUnsupported("sup bound covers C_T^R, C_T^U, C_R^T only");
  if (region.kind == Kind::ConeSlab_CTR && region.R > 3.0 * region.T / 8.0)
    throw RegionUnsupported("C_T^R needs R <= 3T/8");
  if (region.kind == Kind::ConeDist_CTU && region.U > 3.0 * region.T / 8.0)
    throw RegionUnsupported("C_T^U needs U <= 3T/8");

  const auto& sl = tr.slices;
  const double dr = sl.front().dr;
  const std::size_t n = sl.front().psi.size();
  const double r_max = dr * static_cast<double>(n - 1);
  if (sl.size() < 7) throw TooSparse("need at least 7 stored slices");
  if (max_slice_gap(sl) > 2.0 * dr * (1.0 + 1e-9))
    throw TooSparse("slice cadence exceeds 2*dr");

  const Interval trange = region_time_range(region);
  // three slices of padding for the nested time stencils
  if (trange.lo < sl[3].t - 1e-9 || trange.hi > sl[sl.size() - 4].t + 1e-9)
    throw SpanOutOfRange("region needs three padding slices on each side");

  auto phi_at = [&](std::size_t k, double r) { return phi_interp(sl[k], r); };
  auto ddt = [&](auto&& f, std::size_t k, double r) {
    return (f(k + 1, r) - f(k - 1, r)) / (sl[k + 1].t - sl[k - 1].t);
  };
  auto ddr = [&](auto&& f, std::size_t k, double r) {
    return (f(k, r + dr) - f(k, r - dr)) / (2.0 * dr);
  };
  auto scaling = [&](auto&& f, std::size_t k, double r) {
    return sl[k].t * ddt(f, k, r) + r * ddr(f, k, r);
  };
  auto s1 = [&](std::size_t k, double r) { return scaling(phi_at, k, r); };
  auto s2 = [&](std::size_t k, double r) { return scaling(s1, k, r); };

  double sup = 0.0, measure = 0.0;
  double l2_w = 0.0, l2_s = 0.0, l2_ss = 0.0;
  double l2_dw = 0.0, l2_ds = 0.0, l2_dss = 0.0;
  for (std::size_t k = 3; k + 3 < sl.size(); ++k) {
    const double tc = sl[k].t;
    const double lo = 0.5 * (sl[k - 1].t + tc);
    const double hi = 0.5 * (tc + sl[k + 1].t);
    const double wt = std::max(0.0, std::min(hi, trange.hi) -
                                        std::max(lo, trange.lo));
    if (wt == 0.0) continue;
    const auto sections = region_r_sections(region, tc);
    for (const auto& sec : sections) {
      if (sec.empty()) continue;
      if (sec.hi > r_max - 6.0 * dr + 1e-9)
        throw SpanOutOfRange("region reaches the outer grid guard band");
      for (std::size_t i = 0; i < n; ++i) {
        const double r = dr * static_cast<double>(i);
        const double wc = cell_clip(r, dr, sec.lo, sec.hi);
        if (wc == 0.0) continue;
        const double m = wt * wc * 4.0 * kPi * r * r;
        const double w = phi_at(k, r);
        sup = std::max(sup, std::abs(w));
        if (m == 0.0) continue;
        measure += m;
        const double sw = s1(k, r);
        const double ssw = s2(k, r);
        const double mu = jr(std::min(r, std::abs(tc - r)));
        const double dw_t = ddt(phi_at, k, r), dw_r = ddr(phi_at, k, r);
        const double ds_t = ddt(s1, k, r), ds_r = ddr(s1, k, r);
        const double dss_t = ddt(s2, k, r), dss_r = ddr(s2, k, r);
        l2_w += m * w * w;
        l2_s += m * sw * sw;
        l2_ss += m * ssw * ssw;
        l2_dw += m * mu * mu * (dw_t * dw_t + dw_r * dw_r);
        l2_ds += m * mu * mu * (ds_t * ds_t + ds_r * ds_r);
        l2_dss += m * mu * mu * (dss_t * dss_t + dss_r * dss_r);
      }
    }
  }
  InequalityReport rep;
  rep.lhs = sup;
  if (measure > 0.0) {
    rep.rhs = (std::sqrt(l2_w) + std::sqrt(l2_s) + std::sqrt(l2_ss) +
               std::sqrt(l2_dw) + std::sqrt(l2_ds) + std::sqrt(l2_dss)) /
              std::sqrt(measure);
  }
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

}  // namespace wavedecay::regions
