// Command-line front end: config -> simulate -> norms -> predict -> verify
// -> report. Outputs are deterministic for a fixed config and build; wall
// clocks live in a sidecar file so the structured JSON byte-matches across
// reruns.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavedecay/calculus.hpp"
#include "wavedecay/coeffs.hpp"
#include "wavedecay/errors.hpp"
#include "wavedecay/evolve.hpp"
#include "wavedecay/fit.hpp"
#include "wavedecay/regions.hpp"

namespace ca = wavedecay::calculus;
namespace co = wavedecay::coeffs;
namespace ev = wavedecay::evolve;
namespace ft = wavedecay::fit;
namespace rg = wavedecay::regions;
namespace fs = std::filesystem;
using nlohmann::json;
using wavedecay::Rat;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNonFinite = 2;
constexpr int kExitVerifyFail = 3;

// --------------------------------------------------------------------------
// configuration
// --------------------------------------------------------------------------

struct RunConfig {
  co::BackgroundProfile profile;
  ev::CauchyData data;

  double dr = 1.0 / 64;
  double t_final = 32.0;
  double r_max = 0.0;  // 0: sized automatically
  double cfl = 0.5;
  int k_store = 0;
  int k_curve = 1;
  double bulk_gamma = 0.0;

  std::vector<ev::CurveSpec> curves = {
      {ev::CurveSpec::Kind::RConst, 1.0},
      {ev::CurveSpec::Kind::UConst, 10.0},
      {ev::CurveSpec::Kind::Lambda, 0.5},
  };
  json norms = json::array();

  Rat sigma{1};
  Rat gamma{1, 10};
  long long p = 4;
  std::string region = "global";
  bool gamma_hypothesis = false;

  double slope_tol = 0.3;
  double stability_tol = 2.0;
  double fit_t_min = 0.0;  // 0: late-time window chosen per curve
  double fit_t_max = 0.0;  // 0: t_final
  bool control_run = false;
};

ev::CurveSpec curve_from_json(const json& j) {
  ev::CurveSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "r_const") {
    spec.kind = ev::CurveSpec::Kind::RConst;
  } else if (kind == "u_const") {
    spec.kind = ev::CurveSpec::Kind::UConst;
  } else if (kind == "lambda") {
    spec.kind = ev::CurveSpec::Kind::Lambda;
  } else {
    throw wavedecay::ConfigError("unknown curve kind: " + kind);
  }
  spec.value = j.at("value").get<double>();
  return spec;
}

json curve_to_json(const ev::CurveSpec& spec) {
  const char* kind = spec.kind == ev::CurveSpec::Kind::RConst ? "r_const"
                     : spec.kind == ev::CurveSpec::Kind::UConst
                         ? "u_const"
                         : "lambda";
  return json{{"kind", kind}, {"value", spec.value}};
}

ev::CauchyData data_from_json(const json& j) {
  ev::CauchyData data;
  if (j.contains("shape")) {
    const std::string s = j["shape"].get<std::string>();
    if (s == "bump") {
      data.shape = ev::CauchyData::Shape::Bump;
    } else if (s == "gaussian") {
      data.shape = ev::CauchyData::Shape::Gaussian;
    } else {
      throw wavedecay::ConfigError("unknown data shape: " + s);
    }
  }
  if (j.contains("motion")) {
    const std::string m = j["motion"].get<std::string>();
    if (m == "time_symmetric") {
      data.motion = ev::CauchyData::Motion::TimeSymmetric;
    } else if (m == "outgoing") {
      data.motion = ev::CauchyData::Motion::Outgoing;
    } else {
      throw wavedecay::ConfigError("unknown data motion: " + m);
    }
  }
  if (j.contains("amplitude")) data.amplitude = j["amplitude"].get<double>();
  if (j.contains("support_radius"))
    data.support_radius = j["support_radius"].get<double>();
  return data;
}

void apply_config_json(RunConfig& cfg, const json& j, const fs::path& base) {
  if (j.contains("profile")) {
    if (j["profile"].is_string()) {
      fs::path p = j["profile"].get<std::string>();
      if (p.is_relative()) p = base / p;
      cfg.profile = co::load_profile(p.string());
    } else {
      cfg.profile = co::profile_from_json(j["profile"].dump());
    }
  }
  if (j.contains("data")) cfg.data = data_from_json(j["data"]);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (g.contains("dr")) cfg.dr = g["dr"].get<double>();
    if (g.contains("t_final")) cfg.t_final = g["t_final"].get<double>();
    if (g.contains("r_max")) cfg.r_max = g["r_max"].get<double>();
    if (g.contains("cfl")) cfg.cfl = g["cfl"].get<double>();
    if (g.contains("k_store")) cfg.k_store = g["k_store"].get<int>();
    if (g.contains("k_curve")) cfg.k_curve = g["k_curve"].get<int>();
    if (g.contains("bulk_gamma"))
      cfg.bulk_gamma = g["bulk_gamma"].get<double>();
  }
  if (j.contains("observations")) {
    const auto& o = j["observations"];
    if (o.contains("curves")) {
      cfg.curves.clear();
      for (const auto& c : o["curves"]) cfg.curves.push_back(curve_from_json(c));
    }
    if (o.contains("norms")) cfg.norms = o["norms"];
  }
  if (j.contains("calculus")) {
    const auto& c = j["calculus"];
    if (c.contains("sigma"))
      cfg.sigma = wavedecay::parse_rational(c["sigma"].is_string()
                                                ? c["sigma"].get<std::string>()
                                                : c["sigma"].dump());
    if (c.contains("gamma"))
      cfg.gamma = wavedecay::parse_rational(c["gamma"].is_string()
                                                ? c["gamma"].get<std::string>()
                                                : c["gamma"].dump());
    if (c.contains("p")) cfg.p = c["p"].get<long long>();
    if (c.contains("region")) cfg.region = c["region"].get<std::string>();
    if (c.contains("gamma_hypothesis"))
      cfg.gamma_hypothesis = c["gamma_hypothesis"].get<bool>();
  }
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    if (t.contains("slope")) cfg.slope_tol = t["slope"].get<double>();
    if (t.contains("stability"))
      cfg.stability_tol = t["stability"].get<double>();
  }
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    if (f.contains("t_min")) cfg.fit_t_min = f["t_min"].get<double>();
    if (f.contains("t_max")) cfg.fit_t_max = f["t_max"].get<double>();
    if (f.contains("control_run"))
      cfg.control_run = f["control_run"].get<bool>();
  }
}

// --------------------------------------------------------------------------
// output helpers
// --------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wavedecay::ConfigError("cannot write " + path.string());
  out << text;
}

// Wall clocks are quarantined here so every other artifact byte-matches
// across reruns of an unchanged config.
void write_sidecar(const fs::path& out_dir, const std::string& command) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  json j{{"command", command}, {"written_unix_ms", ms}};
  write_text(out_dir / "sidecar.json", j.dump(2) + "\n");
}

int worker_count() {
  const char* env = std::getenv("WAVEDECAY_THREADS");
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (env == nullptr || *env == '\0') return static_cast<int>(hw);
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw wavedecay::ConfigError(
        "WAVEDECAY_THREADS must be a positive integer, got \"" +
        std::string(env) + "\"");
  return static_cast<int>(std::min<long>(v, hw));
}

// --------------------------------------------------------------------------
// predict
// --------------------------------------------------------------------------

json log_summary(const ca::IterationResult& res) {
  return json{{"terminal", res.terminal.render()},
              {"c_u", wavedecay::to_double(res.terminal.c)},
              {"c_u_exact", wavedecay::to_string(res.terminal.c)},
              {"r_phase_steps", res.log.r_phase_steps},
              {"nudge_count", res.log.nudge_count},
              {"log", json::parse(ca::log_to_json(res.log))}};
}

int cmd_predict(const RunConfig& cfg, const fs::path& out_dir) {
  json out{{"sigma", wavedecay::to_string(cfg.sigma)},
           {"gamma", wavedecay::to_string(cfg.gamma)},
           {"p", cfg.p},
           {"region", cfg.region}};
  std::string tables;
  if (cfg.region == "exterior" || cfg.region == "global") {
    const auto res = ca::iterate_exterior(cfg.sigma, cfg.gamma, cfg.p);
    out["exterior"] = log_summary(res);
    tables += ca::log_to_table(res.log) + "\n";
    out["c_u"] = wavedecay::to_double(res.terminal.c);
    out["c_u_exact"] = wavedecay::to_string(res.terminal.c);
  }
  if (cfg.region == "interior" || cfg.region == "global") {
    const auto res = ca::iterate_interior(cfg.sigma, cfg.gamma, cfg.p);
    out["interior"] = log_summary(res);
    tables += ca::log_to_table(res.log) + "\n";
    out["c_u"] = wavedecay::to_double(res.terminal.c);
    out["c_u_exact"] = wavedecay::to_string(res.terminal.c);
  }
  if (!out.contains("c_u"))
    throw wavedecay::ConfigError("region must be exterior, interior, or global, got \"" +
                                 cfg.region + "\"");
  if (cfg.region == "global" &&
      out["exterior"]["c_u_exact"] != out["interior"]["c_u_exact"])
    out["note"] = "exterior and interior terminals disagree";

  write_text(out_dir / "predict.json", out.dump(2) + "\n");
  write_sidecar(out_dir, "predict");
  std::fputs(tables.c_str(), stdout);
  std::printf("terminal u-exponent c_u = %s\n",
              out["c_u_exact"].get<std::string>().c_str());
  return 0;
}

// --------------------------------------------------------------------------
// simulate
// --------------------------------------------------------------------------

ev::ObservationPlan plan_from_config(const RunConfig& cfg) {
  ev::ObservationPlan plan;
  plan.curves = cfg.curves;
  plan.dr = cfg.dr;
  plan.cfl = cfg.cfl;
  plan.r_max = cfg.r_max;
  plan.k_store = cfg.k_store;
  plan.k_curve = cfg.k_curve;
  plan.bulk_gamma = cfg.bulk_gamma;
  return plan;
}

json meta_to_json(const ev::TraceMeta& meta) {
  return json{{"dr", meta.dr},
              {"dt", meta.dt},
              {"r_max", meta.r_max},
              {"t_final", meta.t_final},
              {"n_nodes", meta.n_nodes},
              {"steps", meta.steps},
              {"k_store", meta.k_store},
              {"k_curve", meta.k_curve},
              {"power_p", meta.power_p},
              {"mu_sign", meta.mu_sign},
              {"bulk_gamma", meta.bulk_gamma},
              {"data_amplitude", meta.data_amplitude},
              {"data_support", meta.data_support},
              {"profile_fingerprint", meta.profile_fingerprint},
              {"warnings", meta.warnings}};
}

ev::SpacetimeTrace run_simulation(const RunConfig& cfg) {
  return ev::evolve(cfg.data, cfg.profile, cfg.t_final, plan_from_config(cfg));
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out_dir) {
  const auto trace = run_simulation(cfg);

  ev::write_slices_binary(trace, (out_dir / "trace.bin").string());
  json curve_index = json::array();
  for (std::size_t i = 0; i < trace.curves.size(); ++i) {
    const std::string name = "curve_" + std::to_string(i) + ".csv";
    ev::write_curve_csv(trace, i, (out_dir / name).string());
    curve_index.push_back(
        {{"file", name},
         {"spec", curve_to_json(trace.curves[i].spec)},
         {"samples", trace.curves[i].samples.size()}});
  }
  if (!trace.bulk_history.empty()) {
    std::ostringstream bulk;
    bulk << "t,bulk\n";
    char line[64];
    for (const auto& b : trace.bulk_history) {
      std::snprintf(line, sizeof(line), "%.17g,%.17g\n", b.t, b.value);
      bulk << line;
    }
    write_text(out_dir / "bulk.csv", bulk.str());
  }

  json out{{"meta", meta_to_json(trace.meta)},
           {"profile", json::parse(co::profile_to_json(cfg.profile))},
           {"curves", curve_index},
           {"slices", trace.slices.size()}};
  if (!trace.bulk_history.empty())
    out["bulk_final"] = trace.bulk_history.back().value;
  write_text(out_dir / "simulate.json", out.dump(2) + "\n");
  write_sidecar(out_dir, "simulate");
  std::printf("simulated %zu steps to t = %g (%zu slices, %zu curves)\n",
              trace.meta.steps, trace.meta.t_final, trace.slices.size(),
              trace.curves.size());
  return 0;
}

// --------------------------------------------------------------------------
// norms
// --------------------------------------------------------------------------

json eval_norm_entry(const ev::SpacetimeTrace& trace, const json& entry) {
  const std::string norm = entry.at("norm").get<std::string>();
  rg::NormReport rep;
  if (norm == "le" || norm == "le1" || norm == "le_star" || norm == "d2_le" ||
      norm == "strichartz") {
    const double t0 = entry.at("t0").get<double>();
    const double t1 = entry.at("t1").get<double>();
    if (norm == "le") rep = rg::le_norm(trace, t0, t1);
    if (norm == "le1") rep = rg::le1_norm(trace, t0, t1);
    if (norm == "le_star") rep = rg::le_star_norm(trace, t0, t1);
    if (norm == "d2_le") rep = rg::d2_le_norm(trace, t0, t1);
    if (norm == "strichartz") rep = rg::strichartz_norm(trace, t0, t1);
  } else if (norm == "rgamma_energy") {
    const double t = entry.at("t").get<double>();
    const double gamma = entry.at("gamma").get<double>();
    rep = rg::rgamma_energy(rg::slice_near(trace, t), gamma);
  } else if (norm == "rgamma_bulk") {
    const double t0 = entry.at("t0").get<double>();
    const double t1 = entry.at("t1").get<double>();
    const double gamma = entry.at("gamma").get<double>();
    rep = rg::rgamma_bulk(trace, gamma, t0, t1);
  } else {
    throw wavedecay::ConfigError("unknown norm: " + norm);
  }
  json j = json::parse(rg::report_to_json(rep));
  j["request"] = entry;
  return j;
}

int cmd_norms(const RunConfig& cfg, const fs::path& trace_path,
              const fs::path& out_dir) {
  const auto trace = ev::read_slices_binary(trace_path.string());
  const auto& manifest = cfg.norms;
  std::vector<json> results(manifest.size());
  std::vector<std::exception_ptr> failures(manifest.size());

  const int workers =
      std::max(1, std::min<int>(worker_count(),
                                static_cast<int>(manifest.size())));
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < manifest.size();
           i = next.fetch_add(1)) {
        try {
          results[i] = eval_norm_entry(trace, manifest[i]);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);

  json out{{"trace", trace_path.filename().string()},
           {"norms", json(results)}};
  write_text(out_dir / "norms.json", out.dump(2) + "\n");
  write_sidecar(out_dir, "norms");
  std::printf("computed %zu norm entr%s\n", results.size(),
              results.size() == 1 ? "y" : "ies");
  return 0;
}

// --------------------------------------------------------------------------
// verify
// --------------------------------------------------------------------------

ft::FitVariable canonical_variable(const ev::CurveSpec& spec) {
  switch (spec.kind) {
    case ev::CurveSpec::Kind::UConst: return ft::FitVariable::V;
    case ev::CurveSpec::Kind::RConst:
    case ev::CurveSpec::Kind::Lambda: break;
  }
  return ft::FitVariable::T;
}

// Late-time window: fits start after the pulse's last crossing of the
// observation radius so transients stay out of the regression.
ft::Window fit_window(const RunConfig& cfg, const ev::CurveSpec& spec) {
  ft::Window w;
  w.hi = cfg.fit_t_max > 0.0 ? cfg.fit_t_max : cfg.t_final;
  if (cfg.fit_t_min > 0.0) {
    w.lo = cfg.fit_t_min;
    return w;
  }
  const double r0 = cfg.data.support_radius;
  switch (spec.kind) {
    case ev::CurveSpec::Kind::RConst:
    case ev::CurveSpec::Kind::UConst:
      w.lo = 2.0 * (r0 + spec.value);
      break;
    case ev::CurveSpec::Kind::Lambda:
      w.lo = spec.value < 1.0 ? 2.0 * r0 / (1.0 - spec.value) : 4.0 * r0;
      break;
  }
  return w;
}

int cmd_verify(const RunConfig& cfg, const fs::path& out_dir) {
  const auto trace = run_simulation(cfg);

  // optional flat-background control run estimating the scheme-noise floor
  std::optional<ev::SpacetimeTrace> control;
  if (cfg.control_run) {
    RunConfig flat = cfg;
    flat.profile = co::BackgroundProfile{};
    flat.profile.sigma = cfg.profile.sigma;
    flat.profile.epsilon = cfg.profile.epsilon;
    control = run_simulation(flat);
  }

  std::vector<ft::ExponentFit> fits;
  for (std::size_t i = 0; i < trace.curves.size(); ++i) {
    const auto& curve = trace.curves[i];
    const auto var = canonical_variable(curve.spec);
    const auto window = fit_window(cfg, curve.spec);
    double floor = 0.0;
    if (control) floor = ft::noise_floor(control->curves[i], window);
    fits.push_back(ft::fit_exponent(curve, var, window, floor));
  }

  const auto fr = ca::final_rate(cfg.sigma, cfg.p, cfg.gamma_hypothesis);
  ca::DecayRate prediction;
  prediction.a = Rat(0);
  prediction.b = fr.b_v;
  prediction.c = fr.c_u;
  prediction.region = ca::Region::Global;

  const auto report = ft::reconcile(fits, prediction, cfg.slope_tol);

  json out = json::parse(ft::report_to_json(report));
  out["prediction"] = prediction.render();
  out["c_u"] = wavedecay::to_double(fr.c_u);
  json fit_rows = json::array();
  for (const auto& f : fits) {
    fit_rows.push_back({{"curve", curve_to_json(f.curve)},
                        {"variable", ft::to_string(f.variable)},
                        {"window", {f.window.lo, f.window.hi}},
                        {"n_samples", f.n_samples},
                        {"slope", f.slope},
                        {"stderr", f.std_error},
                        {"r_squared", f.r_squared}});
  }
  out["fits"] = fit_rows;
  write_text(out_dir / "verify.json", out.dump(2) + "\n");
  const auto md = ft::report_to_markdown(report);
  write_text(out_dir / "verify.md", md);
  write_sidecar(out_dir, "verify");
  std::fputs(md.c_str(), stdout);
  return report.verdict ? 0 : kExitVerifyFail;
}

// --------------------------------------------------------------------------
// report
// --------------------------------------------------------------------------

std::optional<json> read_artifact(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return json::parse(ss.str());
}

int cmd_report(const fs::path& out_dir) {
  std::string md = "# wavedecay run dossier\n";
  bool any = false;

  if (auto sim = read_artifact(out_dir / "simulate.json")) {
    any = true;
    const auto& meta = (*sim)["meta"];
    char buf[256];
    md += "\n## simulation\n\n";
    std::snprintf(buf, sizeof(buf),
                  "- grid: dr = %g, r_max = %g, %zu nodes\n",
                  meta["dr"].get<double>(), meta["r_max"].get<double>(),
                  meta["n_nodes"].get<std::size_t>());
    md += buf;
    std::snprintf(buf, sizeof(buf), "- time: dt = %g, %zu steps to t = %g\n",
                  meta["dt"].get<double>(), meta["steps"].get<std::size_t>(),
                  meta["t_final"].get<double>());
    md += buf;
    std::snprintf(buf, sizeof(buf), "- background fingerprint: %s\n",
                  meta["profile_fingerprint"].get<std::string>().c_str());
    md += buf;
    if (sim->contains("bulk_final")) {
      std::snprintf(buf, sizeof(buf), "- final bulk integral: %.8g\n",
                    (*sim)["bulk_final"].get<double>());
      md += buf;
    }
    for (const auto& w : meta["warnings"])
      md += "- warning: " + w.get<std::string>() + "\n";
  }

  if (auto norms = read_artifact(out_dir / "norms.json")) {
    any = true;
    md += "\n## norms\n\n| norm | span | value | err est |\n";
    md += "|------|------|-------|--------|\n";
    char buf[192];
    for (const auto& n : (*norms)["norms"]) {
      std::snprintf(buf, sizeof(buf), "| %s | [%g, %g] | %.8g | %.2g |\n",
                    n["norm"].get<std::string>().c_str(),
                    n["t0"].get<double>(), n["t1"].get<double>(),
                    n["value"].get<double>(), n["err_est"].get<double>());
      md += buf;
    }
  }

  if (auto pred = read_artifact(out_dir / "predict.json")) {
    any = true;
    md += "\n## prediction\n\n";
    md += "- inputs: sigma = " + (*pred)["sigma"].get<std::string>() +
          ", gamma = " + (*pred)["gamma"].get<std::string>() +
          ", p = " + std::to_string((*pred)["p"].get<long long>()) + "\n";
    md += "- terminal u-exponent: c_u = " +
          (*pred)["c_u_exact"].get<std::string>() + "\n";
    for (const char* reg : {"exterior", "interior"}) {
      if (!pred->contains(reg)) continue;
      md += "- " + std::string(reg) + " terminal: " +
            (*pred)[reg]["terminal"].get<std::string>() + "\n";
    }
  }

  if (auto ver = read_artifact(out_dir / "verify.json")) {
    any = true;
    md += "\n## verification\n\n";
    md += "| curve | predicted | fitted | stderr | verdict |\n";
    md += "|-------|-----------|--------|--------|---------|\n";
    char buf[192];
    for (const auto& row : (*ver)["rows"]) {
      std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f | %.3g | %s |\n",
                    row["curve"].get<std::string>().c_str(),
                    row["predicted"].get<double>(),
                    row["fitted"].get<double>(),
                    row["stderr"].get<double>(),
                    row["pass"].get<bool>() ? "pass" : "fail");
      md += buf;
    }
    md += "\naggregate: ";
    md += (*ver)["verdict"].get<std::string>();
    md += "\n";
  }

  if (!any)
    throw wavedecay::ConfigError("no artifacts found in " + out_dir.string() +
                                 "; run simulate/norms/predict/verify first");
  write_text(out_dir / "report.md", md);
  write_sidecar(out_dir, "report");
  std::fputs(md.c_str(), stdout);
  return 0;
}

}  // namespace

// --------------------------------------------------------------------------
// entry point
// --------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"pointwise decay verification laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::string trace_path;
  std::string profile_path;
  std::string sigma_flag, gamma_flag, region_flag;
  long long p_flag = 0;
  double dr_flag = 0.0, t_final_flag = 0.0, r_max_flag = 0.0;
  double amplitude_flag = 0.0, support_flag = 0.0, bulk_gamma_flag = 0.0;
  double slope_tol_flag = 0.0;
  int mu_flag = 2;  // sentinel: 2 = unset

  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--out", out_dir, "artifact directory (default: out)");

  auto* sim = app.add_subcommand("simulate", "run the Cauchy problem");
  auto* nrm = app.add_subcommand("norms", "norm manifest over a stored trace");
  auto* prd = app.add_subcommand("predict", "symbolic decay-rate iteration");
  auto* ver = app.add_subcommand("verify", "simulate, fit, and reconcile");
  auto* rep = app.add_subcommand("report", "assemble the Markdown dossier");

  for (auto* cmd : {sim, ver}) {
    cmd->add_option("--profile", profile_path, "background profile JSON file");
    cmd->add_option("--dr", dr_flag, "grid spacing");
    cmd->add_option("--t-final", t_final_flag, "evolution time");
    cmd->add_option("--r-max", r_max_flag, "domain radius (0: automatic)");
    cmd->add_option("--amplitude", amplitude_flag, "data amplitude");
    cmd->add_option("--support", support_flag, "data support radius");
    cmd->add_option("--bulk-gamma", bulk_gamma_flag,
                    "gamma of the running bulk integral (0: off)");
    cmd->add_option("--mu", mu_flag, "nonlinearity sign (-1, 0, +1)");
  }
  nrm->add_option("--trace", trace_path, "binary trace (default: <out>/trace.bin)");
  for (auto* cmd : {prd, ver}) {
    cmd->add_option("--sigma", sigma_flag, "flatness increment (rational)");
    cmd->add_option("--gamma", gamma_flag, "weight exponent (rational)");
    cmd->add_option("--p", p_flag, "nonlinearity power");
  }
  prd->add_option("--region", region_flag, "exterior | interior | global");
  ver->add_option("--slope-tol", slope_tol_flag, "slope tolerance");

  try {
    app.parse(argc, argv);

    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in)
        throw wavedecay::ConfigError("config file not found: " + config_path);
      std::ostringstream ss;
      ss << in.rdbuf();
      apply_config_json(cfg, json::parse(ss.str()),
                        fs::path(config_path).parent_path());
    }
    if (!profile_path.empty()) cfg.profile = co::load_profile(profile_path);
    if (dr_flag > 0.0) cfg.dr = dr_flag;
    if (t_final_flag > 0.0) cfg.t_final = t_final_flag;
    if (r_max_flag > 0.0) cfg.r_max = r_max_flag;
    if (amplitude_flag != 0.0) cfg.data.amplitude = amplitude_flag;
    if (support_flag > 0.0) cfg.data.support_radius = support_flag;
    if (bulk_gamma_flag > 0.0) cfg.bulk_gamma = bulk_gamma_flag;
    if (mu_flag != 2) cfg.profile.mu_sign = mu_flag;
    if (!sigma_flag.empty()) cfg.sigma = wavedecay::parse_rational(sigma_flag);
    if (!gamma_flag.empty()) cfg.gamma = wavedecay::parse_rational(gamma_flag);
    if (p_flag > 0) cfg.p = p_flag;
    if (!region_flag.empty()) cfg.region = region_flag;
    if (slope_tol_flag > 0.0) cfg.slope_tol = slope_tol_flag;

    const fs::path out(out_dir);
    fs::create_directories(out);

    if (*sim) return cmd_simulate(cfg, out);
    if (*nrm)
      return cmd_norms(
          cfg, trace_path.empty() ? out / "trace.bin" : fs::path(trace_path),
          out);
    if (*prd) return cmd_predict(cfg, out);
    if (*ver) return cmd_verify(cfg, out);
    if (*rep) return cmd_report(out);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    json err{{"error", "ConfigError"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return kExitConfig;
  } catch (const wavedecay::NonFinite& e) {
    json err{{"error", e.code()}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return kExitNonFinite;
  } catch (const wavedecay::Error& e) {
    json err{{"error", e.code()}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return kExitConfig;
  } catch (const std::exception& e) {
    json err{{"error", "Error"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return kExitConfig;
  }
}
