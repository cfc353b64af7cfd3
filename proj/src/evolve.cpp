#include "wavedecay/evolve.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

namespace wavedecay::evolve {

namespace {

constexpr double kPi = 3.14159265358979323846;

double ipow(double x, int k) {
  double y = 1.0;
  while (k-- > 0) y *= x;
  return y;
}

// C^inf bump: 1 at s = 0, supported in |s| < 1.
double bump_profile(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

// quadratic (3-node) interpolation of a node array at radius rt on the
// uniform grid r_i = i * dr; optionally the radial derivative there
void interp2(const std::vector<double>& f, double dr, double rt, double* val,
             double* der) {
  const std::size_t n = f.size();
  auto i = static_cast<std::size_t>(std::llround(rt / dr));
  if (i < 1) i = 1;
  if (i > n - 2) i = n - 2;
  const double x = rt - dr * static_cast<double>(i);
  const double d1 = (f[i + 1] - f[i - 1]) / (2.0 * dr);
  const double d2 = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (dr * dr);
  if (val) *val = f[i] + x * d1 + 0.5 * x * x * d2;
  if (der) *der = d1 + x * d2;
}

// Precomputed per-node coefficient tables; the time modulations are scalar
// factors applied per step, so stepping never calls pow().
class Stepper {
 public:
  Stepper(const coeffs::BackgroundProfile& p, double dr, std::size_t n)
      : p_(p), dr_(dr), n_(n) {
    coeffs::validate(p);
    if (p.mu_sign != 0 &&
        (p.power_p % 2 != 0 || p.power_p < 2 || p.power_p > 6))
      throw ConfigError(
          "nonlinear stepping is provided for even p in {2, 4, 6} only");
    c_h_ = std::abs(p.h.amplitude);
    if (p.h.kind == coeffs::ShapeKind::Flat) c_h_ = 0.0;
    if (c_h_ >= 1.0) throw ConfigError("|h| >= 1 degenerates the wave speed");
    const double kh = 1.0 + p.sigma;
    const double kv = 2.0 + p.sigma;
    wh_.resize(n);
    wb_.resize(n);
    wv_.resize(n);
    r_.resize(n);
    rinv_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r_[i] = dr * static_cast<double>(i);
      rinv_[i] = i == 0 ? 0.0 : 1.0 / r_[i];
      wh_[i] = coeffs::radial_part(p.h, kh, r_[i]);
      wb_[i] = coeffs::radial_part(p.b, kh, r_[i]);
      wv_[i] = coeffs::radial_part(p.v, kv, r_[i]);
    }
    has_b_ = p.b.kind != coeffs::ShapeKind::Flat && p.b.amplitude != 0.0;
    mu_ = static_cast<double>(p.mu_sign);
    pw_ = p.power_p;
    vh_.resize(n, 0.0);
    a1_.resize(n, 0.0);
  }

  double c_h() const { return c_h_; }

  void check_cfl(double dt) const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const double lim = 0.5 * dr_ * (1.0 - c_h_);
    if (dt > lim * (1.0 + 1e-12))
      throw CflViolation("dt = " + std::to_string(dt) +
                         " exceeds 0.5*dr*(1 - c_h) = " + std::to_string(lim));
  }

  void accel(const std::vector<double>& psi, const std::vector<double>& psi_t,
             double t, std::vector<double>& out) const {
    const double ah = coeffs::time_factor(p_.h.time_mod, t);
    const double ab = coeffs::time_factor(p_.b.time_mod, t);
    const double av = coeffs::time_factor(p_.v.time_mod, t);
    const double inv_dr2 = 1.0 / (dr_ * dr_);
    out[0] = 0.0;
    out[n_ - 1] = 0.0;
    if (mu_ == 0.0 && !has_b_) {
      for (std::size_t i = 1; i + 1 < n_; ++i) {
        const double lap =
            (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv_dr2;
        out[i] = (1.0 + ah * wh_[i]) * lap + av * wv_[i] * psi[i];
      }
      return;
    }
    for (std::size_t i = 1; i + 1 < n_; ++i) {
      const double lap = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv_dr2;
      double a = (1.0 + ah * wh_[i]) * lap + ab * wb_[i] * psi_t[i] +
                 av * wv_[i] * psi[i];
      if (mu_ != 0.0) {
        const double phi = psi[i] * rinv_[i];
        a -= mu_ * r_[i] * ipow(phi, pw_ + 1);
      }
      out[i] = a;
    }
  }

  // advance in place; acc carries accel(state) into the next step on the
  // B == 0 fast path (one accel evaluation per step)
  void advance(RadialState& s, double dt, std::vector<double>& acc,
               bool& acc_valid) {
    auto& psi = s.psi;
    auto& pt = s.psi_t;
    const double t1 = s.t + dt;
    if (!has_b_) {
      if (!acc_valid) accel(psi, pt, s.t, acc);
      for (std::size_t i = 1; i + 1 < n_; ++i) pt[i] += 0.5 * dt * acc[i];
      for (std::size_t i = 1; i + 1 < n_; ++i) psi[i] += dt * pt[i];
      accel(psi, pt, t1, acc);
      for (std::size_t i = 1; i + 1 < n_; ++i) pt[i] += 0.5 * dt * acc[i];
      acc_valid = true;
    } else {
      accel(psi, pt, s.t, a1_);
      for (std::size_t i = 1; i + 1 < n_; ++i)
        vh_[i] = pt[i] + 0.5 * dt * a1_[i];
      for (std::size_t i = 1; i + 1 < n_; ++i) psi[i] += dt * vh_[i];
      // predict the end-step velocity, then one corrector pass for the
      // psi_t coupling in the acceleration
      accel(psi, vh_, t1, a1_);
      for (std::size_t i = 1; i + 1 < n_; ++i)
        pt[i] = vh_[i] + 0.5 * dt * a1_[i];
      accel(psi, pt, t1, a1_);
      for (std::size_t i = 1; i + 1 < n_; ++i)
        pt[i] = vh_[i] + 0.5 * dt * a1_[i];
      acc_valid = false;
    }
    psi[0] = 0.0;
    pt[0] = 0.0;
    s.t = t1;
    double probe = 0.0;
    for (std::size_t i = 0; i < n_; ++i) probe += psi[i] + pt[i];
    if (!std::isfinite(probe))
      throw NonFinite("non-finite field values at t = " + std::to_string(t1));
  }

 private:
  coeffs::BackgroundProfile p_;
  double dr_;
  std::size_t n_;
  double c_h_ = 0.0;
  bool has_b_ = false;
  double mu_ = 0.0;
  int pw_ = 4;
  std::vector<double> wh_, wb_, wv_, r_, rinv_;
  std::vector<double> vh_, a1_;
};

}  // namespace

void validate(const RadialState& s) {
  if (!(s.dr > 0.0)) throw ConfigError("state needs dr > 0");
  if (s.psi.size() != s.psi_t.size())
    throw ConfigError("psi and psi_t lengths differ");
  if (s.psi.size() < 16) throw ConfigError("state needs at least 16 nodes");
  if (s.psi[0] != 0.0)
    throw ConfigError("psi[0] must vanish (phi regular at r = 0)");
}

double CauchyData::phi0(double r) const {
  if (r <= 0.0 || r >= support_radius) return 0.0;
  switch (shape) {
    case Shape::Bump:
      return amplitude * bump_profile(2.0 * r / support_radius - 1.0);
    case Shape::Gaussian: {
      const double w = 0.1 * support_radius;
      const double s = (r - 0.5 * support_radius) / w;
      return amplitude * std::exp(-s * s);
    }
  }
  return 0.0;
}

double CauchyData::dphi0_dr(double r) const {
  if (r <= 0.0 || r >= support_radius) return 0.0;
  switch (shape) {
    case Shape::Bump: {
      const double s = 2.0 * r / support_radius - 1.0;
      const double g = 1.0 - s * s;
      if (g <= 0.0) return 0.0;
      return amplitude * bump_profile(s) * (-2.0 * s / (g * g)) *
             (2.0 / support_radius);
    }
    case Shape::Gaussian: {
      const double w = 0.1 * support_radius;
      const double s = (r - 0.5 * support_radius) / w;
      return amplitude * std::exp(-s * s) * (-2.0 * s / w);
    }
  }
  return 0.0;
}

double CauchyData::phi1(double r) const {
  if (motion == Motion::TimeSymmetric) return 0.0;
  if (r <= 0.0 || r >= support_radius) return 0.0;
  // outward pulse: r*phi = f(r - t) with f(r) = r*phi0, so
  // r*phi1 = -f'(r) = -(phi0 + r*phi0')
  return -dphi0_dr(r) - phi0(r) / r;
}

double cfl_limit(const coeffs::BackgroundProfile& profile, double dr,
                 double cfl_factor) {
  coeffs::validate(profile);
  double c_h = std::abs(profile.h.amplitude);
  if (profile.h.kind == coeffs::ShapeKind::Flat) c_h = 0.0;
  if (c_h >= 1.0) throw ConfigError("|h| >= 1 degenerates the wave speed");
  return cfl_factor * dr * (1.0 - c_h);
}

RadialState step(const RadialState& state,
                 const coeffs::BackgroundProfile& profile, double dt) {
  validate(state);
  Stepper st(profile, state.dr, state.psi.size());
  st.check_cfl(dt);
  RadialState out = state;
  std::vector<double> acc(state.psi.size(), 0.0);
  bool acc_valid = false;
  st.advance(out, dt, acc, acc_valid);
  return out;
}

RadialState initial_state(const CauchyData& data, double dr, double r_max) {
  if (!(dr > 0.0)) throw ConfigError("dr must be positive");
  if (!(data.support_radius > 0.0))
    throw ConfigError("support radius must be positive");
  const auto n = static_cast<std::size_t>(std::llround(r_max / dr)) + 1;
  if (n < 16) throw ConfigError("grid needs at least 16 nodes");
  RadialState s;
  s.dr = dr;
  s.psi.assign(n, 0.0);
  s.psi_t.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double r = dr * static_cast<double>(i);
    s.psi[i] = r * data.phi0(r);
    s.psi_t[i] = r * data.phi1(r);
  }
  return s;
}

SpacetimeTrace evolve(const CauchyData& data,
                      const coeffs::BackgroundProfile& profile, double t_final,
                      const ObservationPlan& plan) {
  coeffs::validate(profile);
  if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
  if (!(plan.dr > 0.0)) throw ConfigError("dr must be positive");
  if (!(plan.cfl > 0.0) || plan.cfl > 0.5)
    throw ConfigError("cfl must lie in (0, 0.5]");
  if (plan.k_curve < 1) throw ConfigError("k_curve must be >= 1");
  if (plan.k_store < 0) throw ConfigError("k_store must be >= 0");
  if (plan.bulk_gamma < 0.0 || plan.bulk_gamma >= 1.0)
    throw ConfigError("bulk_gamma must lie in [0, 1)");
  for (const auto& c : plan.curves) {
    if (c.kind == CurveSpec::Kind::RConst && !(c.value > 0.0))
      throw ConfigError("r = const curve needs a positive radius");
    if (c.kind == CurveSpec::Kind::Lambda &&
        !(c.value > 0.0 && c.value <= 1.0))
      throw ConfigError("r = lambda*t curve needs lambda in (0, 1]");
  }

  double r_max = plan.r_max;
  if (r_max == 0.0) {
    r_max = data.support_radius + t_final + 16.0 * plan.dr;
  } else if (r_max < data.support_radius + t_final + 8.0 * plan.dr) {
    throw ConfigError(
        "r_max too small: the outer boundary must stay causally "
        "disconnected from the observed region");
  }

  RadialState state = initial_state(data, plan.dr, r_max);
  const std::size_t n = state.psi.size();
  Stepper st(profile, plan.dr, n);
  const double dt = plan.cfl * plan.dr * (1.0 - st.c_h());
  const auto steps =
      static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
  int k_store = plan.k_store;
  if (k_store <= 0)
    k_store = static_cast<int>(std::max<std::size_t>(1, steps / 64));

  SpacetimeTrace tr;
  tr.meta.dr = plan.dr;
  tr.meta.dt = dt;
  tr.meta.r_max = r_max;
  tr.meta.t_final = t_final;
  tr.meta.n_nodes = n;
  tr.meta.steps = steps;
  tr.meta.k_store = k_store;
  tr.meta.k_curve = plan.k_curve;
  tr.meta.power_p = profile.power_p;
  tr.meta.mu_sign = profile.mu_sign;
  tr.meta.bulk_gamma = plan.bulk_gamma;
  tr.meta.data_amplitude = data.amplitude;
  tr.meta.data_support = data.support_radius;
  tr.meta.profile_fingerprint = coeffs::profile_fingerprint(profile);
  if (coeffs::has_angular(profile))
    tr.meta.warnings.push_back(
        "angular coefficient g_omega is inert under the radial reduction; "
        "its amplitude does not enter the scheme");

  tr.curves.reserve(plan.curves.size());
  for (const auto& c : plan.curves) tr.curves.push_back({c, {}});

  const bool want_bulk = plan.bulk_gamma > 0.0;
  std::vector<double> rg;
  double bulk = 0.0;
  const int bulk_pow = profile.power_p + 2;
  if (want_bulk) {
    rg.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i)
      rg[i] = std::pow(plan.dr * static_cast<double>(i),
                       plan.bulk_gamma + 1.0);
  }

  auto sample_curves = [&](const RadialState& s) {
    for (auto& c : tr.curves) {
      double rt = 0.0;
      switch (c.spec.kind) {
        case CurveSpec::Kind::RConst:
          rt = c.spec.value;
          break;
        case CurveSpec::Kind::UConst:
          rt = s.t - c.spec.value;
          break;
        case CurveSpec::Kind::Lambda:
          rt = c.spec.value * s.t;
          break;
      }
      if (!(rt >= 2.0 * s.dr) || rt > r_max - 2.0 * s.dr) continue;
      double pv = 0.0, pd = 0.0, qv = 0.0;
      interp2(s.psi, s.dr, rt, &pv, &pd);
      interp2(s.psi_t, s.dr, rt, &qv, nullptr);
      CurveSample cs;
      cs.t = s.t;
      cs.r = rt;
      cs.phi = pv / rt;
      cs.dphi_t = qv / rt;
      cs.dphi_r = pd / rt - pv / (rt * rt);
      cs.s_phi = s.t * cs.dphi_t + rt * cs.dphi_r;
      c.samples.push_back(cs);
    }
  };
  auto store_slice = [&](const RadialState& s) {
    tr.slices.push_back(s);
    if (want_bulk) tr.bulk_history.push_back({s.t, bulk});
  };

  store_slice(state);
  sample_curves(state);

  std::vector<double> acc(n, 0.0);
  bool acc_valid = false;
  for (std::size_t k = 1; k <= steps; ++k) {
    st.advance(state, dt, acc, acc_valid);
    if (want_bulk) {
      double sum = 0.0;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        const double phi = state.psi[i] / (plan.dr * static_cast<double>(i));
        sum += rg[i] * ipow(std::abs(phi), bulk_pow);
      }
      bulk += dt * 4.0 * kPi * plan.dr * sum;
    }
    if (k % static_cast<std::size_t>(plan.k_curve) == 0 || k == steps)
      sample_curves(state);
    if (k % static_cast<std::size_t>(k_store) == 0 || k == steps)
      store_slice(state);
  }
  return tr;
}

SpacetimeTrace apply_vector_fields(const SpacetimeTrace& trace, int order) {
  if (order < 1 || order > 2)
    throw ConfigError("vector-field order must be 1 or 2");
  const auto& sl = trace.slices;
  const auto pad = static_cast<std::size_t>(order);
  if (sl.size() < 2 * pad + 1)
    throw TooSparse("need at least " + std::to_string(2 * pad + 1) +
                    " stored slices");
  const double dr = sl.front().dr;
  const std::size_t n = sl.front().psi.size();
  for (std::size_t k = 0; k < sl.size(); ++k) {
    if (sl[k].psi.size() != n || sl[k].dr != dr)
      throw ConfigError("slices disagree on the grid");
    if (k > 0 && sl[k].t - sl[k - 1].t > 2.0 * dr * (1.0 + 1e-9))
      throw TooSparse("slice gap " + std::to_string(sl[k].t - sl[k - 1].t) +
                      " exceeds 2*dr = " + std::to_string(2.0 * dr));
  }

  auto phi_at = [&](std::size_t k, double r) {
    double v = 0.0;
    interp2(sl[k].psi, dr, r, &v, nullptr);
    return v / r;
  };
  auto ddt = [&](auto&& f, std::size_t k, double r) {
    return (f(k + 1, r) - f(k - 1, r)) / (sl[k + 1].t - sl[k - 1].t);
  };
  auto ddr = [&](auto&& f, std::size_t k, double r) {
    return (f(k, r + dr) - f(k, r - dr)) / (2.0 * dr);
  };
  auto scaling = [&](auto&& f, std::size_t k, double r) {
    return sl[k].t * ddt(f, k, r) + r * ddr(f, k, r);
  };

  SpacetimeTrace out = trace;
  out.augmented.clear();
  const double guard = (3.0 + order) * dr;
  for (const auto& curve : trace.curves) {
    AugmentedCurve ac;
    ac.spec = curve.spec;
    ac.order = order;
    ac.omega_zero = true;
    for (std::size_t k = pad; k + pad < sl.size(); ++k) {
      const double t = sl[k].t;
      double rc = 0.0;
      switch (curve.spec.kind) {
        case CurveSpec::Kind::RConst:
          rc = curve.spec.value;
          break;
        case CurveSpec::Kind::UConst:
          rc = t - curve.spec.value;
          break;
        case CurveSpec::Kind::Lambda:
          rc = curve.spec.value * t;
          break;
      }
      if (!(rc >= guard) || rc > (static_cast<double>(n) - 1.0) * dr - guard)
        continue;
      VectorFieldSample vs;
      vs.t = t;
      vs.r = rc;
      vs.phi = phi_at(k, rc);
      vs.dphi_t = ddt(phi_at, k, rc);
      vs.dphi_r = ddr(phi_at, k, rc);
      vs.s_phi = t * vs.dphi_t + rc * vs.dphi_r;
      if (order == 2) {
        auto sphi = [&](std::size_t kk, double rr) {
          return scaling(phi_at, kk, rr);
        };
        auto dtphi = [&](std::size_t kk, double rr) {
          return ddt(phi_at, kk, rr);
        };
        auto drphi = [&](std::size_t kk, double rr) {
          return ddr(phi_at, kk, rr);
        };
        vs.ss_phi = scaling(sphi, k, rc);
        vs.s_dphi_t = scaling(dtphi, k, rc);
        vs.s_dphi_r = scaling(drphi, k, rc);
      }
      ac.samples.push_back(vs);
    }
    out.augmented.push_back(std::move(ac));
  }
  return out;
}

double discrete_energy(const RadialState& s,
                       const coeffs::BackgroundProfile& profile) {
  validate(s);
  coeffs::validate(profile);
  const std::size_t n = s.psi.size();
  const double dr = s.dr;
  const int pw = profile.power_p;
  double e = 0.0;
  // staggered gradient: exact invariant of the semi-discrete system when the
  // profile is flat and static, so drift measures the time discretization
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double g = (s.psi[i + 1] - s.psi[i]) / dr;
    e += 0.5 * dr * g * g;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double val = 0.5 * s.psi_t[i] * s.psi_t[i];
    if (profile.mu_sign != 0) {
      const double r = dr * static_cast<double>(i);
      const double phi = s.psi[i] / r;
      // psi^{p+2} / r^p = r^2 phi^{p+2}
      val += profile.mu_sign * r * r * ipow(phi, pw + 2) /
             static_cast<double>(pw + 2);
    }
    e += dr * val;
  }
  return e;
}

void write_curve_csv(const SpacetimeTrace& trace, std::size_t curve_index,
                     std::ostream& out) {
  if (curve_index >= trace.curves.size())
    throw ConfigError("curve index out of range");
  out << "t,r,u,v,phi,dphi_t,dphi_r,S_phi\n";
  char line[320];
  for (const auto& s : trace.curves[curve_index].samples) {
    std::snprintf(line, sizeof line,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t,
                  s.r, s.t - s.r, s.t + s.r, s.phi, s.dphi_t, s.dphi_r,
                  s.s_phi);
    out << line;
  }
}

void write_curve_csv(const SpacetimeTrace& trace, std::size_t curve_index,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  write_curve_csv(trace, curve_index, out);
}

static_assert(std::endian::native == std::endian::little,
              "slice dumps assume a little-endian host");

void write_slices_binary(const SpacetimeTrace& trace,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  const char magic[16] = {'W', 'A', 'V', 'E', 'D', 'E', 'C', 'A',
                          'Y', 'T', 'R', 'A', 'C', 'E', '0', '1'};
  out.write(magic, 16);
  const std::uint64_t ns = trace.slices.size();
  const std::uint64_t nn = ns ? trace.slices.front().psi.size() : 0;
  const double dr = ns ? trace.slices.front().dr : trace.meta.dr;
  out.write(reinterpret_cast<const char*>(&ns), 8);
  out.write(reinterpret_cast<const char*>(&nn), 8);
  out.write(reinterpret_cast<const char*>(&dr), 8);
  for (const auto& s : trace.slices) {
    if (s.psi.size() != nn || s.psi_t.size() != nn)
      throw ConfigError("slices disagree on the node count");
    out.write(reinterpret_cast<const char*>(&s.t), 8);
    out.write(reinterpret_cast<const char*>(s.psi.data()),
              static_cast<std::streamsize>(8 * nn));
    out.write(reinterpret_cast<const char*>(s.psi_t.data()),
              static_cast<std::streamsize>(8 * nn));
  }
  if (!out) throw ConfigError("write failed: " + path);
}

SpacetimeTrace read_slices_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  char magic[16];
  in.read(magic, 16);
  if (in.gcount() != 16 || std::memcmp(magic, "WAVEDECAYTRACE01", 16) != 0)
    throw ConfigError("bad magic: not a slice dump");
  std::uint64_t ns = 0, nn = 0;
  double dr = 0.0;
  in.read(reinterpret_cast<char*>(&ns), 8);
  in.read(reinterpret_cast<char*>(&nn), 8);
  in.read(reinterpret_cast<char*>(&dr), 8);
  if (!in || ns > (1u << 26) || nn > (1u << 30) || !(dr > 0.0))
    throw ConfigError("corrupt slice dump header");
  SpacetimeTrace tr;
  tr.meta.dr = dr;
  tr.meta.n_nodes = nn;
  tr.slices.resize(ns);
  double prev_t = -1.0;
  for (auto& s : tr.slices) {
    s.dr = dr;
    s.psi.resize(nn);
    s.psi_t.resize(nn);
    in.read(reinterpret_cast<char*>(&s.t), 8);
    in.read(reinterpret_cast<char*>(s.psi.data()),
            static_cast<std::streamsize>(8 * nn));
    in.read(reinterpret_cast<char*>(s.psi_t.data()),
            static_cast<std::streamsize>(8 * nn));
    if (!in) throw ConfigError("truncated slice dump");
    if (s.t <= prev_t && prev_t >= 0.0)
      throw ConfigError("slice times not monotone");
    prev_t = s.t;
  }
  return tr;
}

}  // namespace wavedecay::evolve
