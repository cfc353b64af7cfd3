// Subprocess tests of the command-line front end: artifact shapes, exit
// codes, determinism of the structured outputs, and config/flag precedence.

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wavedecay_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Runs the CLI through the shell; env is a prefix like "WAVEDECAY_THREADS=2".
CliResult run_cli(const fs::path& dir, const std::string& args,
                  const std::string& env = "") {
  const fs::path out_file = dir / "_stdout.txt";
  const fs::path err_file = dir / "_stderr.txt";
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string("\"") + WAVEDECAY_CLI_PATH + "\" " + args;
  cmd += " >\"" + out_file.string() + "\" 2>\"" + err_file.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

json read_json(const fs::path& path) { return json::parse(slurp(path)); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Background with an inverse-power potential; an outgoing pulse leaves a
// tail whose late-time slopes the verify pipeline has to reconcile. The
// pulse is wide so the grid resolves it: narrow data shed a dispersive wake
// that buries the tail along u = const.
json potential_config(double t_final) {
  json cfg;
  cfg["profile"] = {{"sigma", 1.0},
                    {"epsilon", 0.1},
                    {"mu_sign", 0},
                    {"V", {{"shape", "inverse_power"}, {"amplitude", 0.05}}}};
  cfg["data"] = {{"shape", "gaussian"},
                 {"motion", "outgoing"},
                 {"amplitude", 1.0},
                 {"support_radius", 8.0}};
  cfg["grid"] = {{"dr", 1.0 / 32}, {"t_final", t_final}};
  cfg["calculus"] = {{"sigma", "1"}, {"p", 4}};
  cfg["tolerances"] = {{"slope", 0.5}};
  return cfg;
}

}  // namespace

TEST_CASE("predict emits the exact terminal exponent and its staged log") {
  const auto dir = fresh_dir("predict");
  const auto r = run_cli(
      dir, "--out " + q(dir) +
               " predict --sigma 0.3 --gamma 0.1 --p 4 --region interior");
  CHECK(r.code == 0);
  CHECK(r.out.find("13/10") != std::string::npos);

  const json out = read_json(dir / "predict.json");
  CHECK(out.at("c_u").get<double>() == 1.3);
  CHECK(out.at("c_u_exact").get<std::string>() == "13/10");
  CHECK(out.at("sigma").get<std::string>() == "3/10");
  CHECK(out.at("interior").at("nudge_count").get<int>() == 0);
  CHECK(out.at("interior").at("log").is_object());
  CHECK_FALSE(out.contains("exterior"));
}

TEST_CASE("predict global runs both engines and they agree") {
  const auto dir = fresh_dir("predict_global");
  const auto r = run_cli(
      dir, "--out " + q(dir) +
               " predict --sigma 7/20 --gamma 1/10 --p 4 --region global");
  CHECK(r.code == 0);

  const json out = read_json(dir / "predict.json");
  CHECK(out.at("c_u_exact").get<std::string>() == "27/20");
  CHECK(out.at("exterior").at("c_u_exact").get<std::string>() == "27/20");
  CHECK(out.at("interior").at("c_u_exact").get<std::string>() == "27/20");
  CHECK_FALSE(out.contains("note"));
}

TEST_CASE("predict rejects an inadmissible weight exponent with a JSON record") {
  const auto dir = fresh_dir("predict_bad_gamma");
  const auto r = run_cli(
      dir, "--out " + q(dir) +
               " predict --sigma 7/20 --gamma 0.9 --p 4 --region exterior");
  CHECK(r.code == 1);
  const json err = json::parse(r.err);
  CHECK(err.at("error").get<std::string>() == "GammaOutOfRange");
  CHECK_FALSE(err.at("message").get<std::string>().empty());
}

TEST_CASE("simulate writes deterministic artifacts with clocks quarantined") {
  const auto dir1 = fresh_dir("sim_a");
  const auto dir2 = fresh_dir("sim_b");
  const std::string flags = " simulate --dr 0.0625 --t-final 4 --amplitude 1";
  const auto r1 = run_cli(dir1, "--out " + q(dir1) + flags);
  REQUIRE(r1.code == 0);
  const auto r2 = run_cli(dir2, "--out " + q(dir2) + flags);
  REQUIRE(r2.code == 0);

  for (const char* name : {"trace.bin", "simulate.json", "sidecar.json",
                           "curve_0.csv", "curve_1.csv", "curve_2.csv"}) {
    CHECK(fs::exists(dir1 / name));
  }
  CHECK(slurp(dir1 / "simulate.json") == slurp(dir2 / "simulate.json"));
  CHECK(slurp(dir1 / "trace.bin") == slurp(dir2 / "trace.bin"));
  CHECK(slurp(dir1 / "curve_0.csv") == slurp(dir2 / "curve_0.csv"));

  const json sim = read_json(dir1 / "simulate.json");
  CHECK(sim.at("meta").at("t_final").get<double>() == doctest::Approx(4.0));
  CHECK(sim.at("slices").get<std::size_t>() >= 2);
  CHECK_FALSE(sim.contains("written_unix_ms"));
  const json side = read_json(dir1 / "sidecar.json");
  CHECK(side.at("written_unix_ms").get<long long>() > 0);
}

TEST_CASE("norms shards a manifest over a stored trace under the thread cap") {
  const auto dir = fresh_dir("norms");
  json cfg;
  cfg["data"] = {{"shape", "gaussian"},
                 {"motion", "time_symmetric"},
                 {"amplitude", 1.0},
                 {"support_radius", 1.0}};
  cfg["grid"] = {{"dr", 1.0 / 32}, {"t_final", 8.0}};
  json manifest = json::array();
  manifest.push_back({{"norm", "le"}, {"t0", 0.0}, {"t1", 8.0}});
  manifest.push_back({{"norm", "le1"}, {"t0", 0.0}, {"t1", 8.0}});
  manifest.push_back({{"norm", "rgamma_energy"}, {"t", 4.0}, {"gamma", 0.5}});
  manifest.push_back(
      {{"norm", "rgamma_bulk"}, {"t0", 0.0}, {"t1", 8.0}, {"gamma", 0.5}});
  cfg["observations"]["norms"] = manifest;
  spit(dir / "run.json", cfg.dump(2));
  const std::string base =
      "--config " + q(dir / "run.json") + " --out " + q(dir);

  auto r = run_cli(dir, base + " simulate");
  REQUIRE(r.code == 0);

  r = run_cli(dir, base + " norms", "WAVEDECAY_THREADS=2");
  CHECK(r.code == 0);
  const json out = read_json(dir / "norms.json");
  REQUIRE(out.at("norms").size() == 4);
  for (const auto& entry : out.at("norms")) {
    const double value = entry.at("value").get<double>();
    CHECK(std::isfinite(value));
    CHECK(value > 0.0);
  }

  r = run_cli(dir, base + " norms", "WAVEDECAY_THREADS=abc");
  CHECK(r.code == 1);
  CHECK(json::parse(r.err).at("error").get<std::string>() == "ConfigError");
}

TEST_CASE("verify reconciles a potential tail against the symbolic terminal") {
  const auto dir = fresh_dir("verify_pass");
  spit(dir / "run.json", potential_config(350.0).dump(2));
  const auto r = run_cli(
      dir, "--config " + q(dir / "run.json") + " --out " + q(dir) + " verify");
  CHECK(r.code == 0);
  CHECK(r.out.find("aggregate: pass") != std::string::npos);

  const json out = read_json(dir / "verify.json");
  CHECK(out.at("verdict").get<std::string>() == "pass");
  CHECK(out.at("covers_canonical").get<bool>());
  REQUIRE(out.at("rows").size() == 3);
  for (const auto& row : out.at("rows")) CHECK(row.at("pass").get<bool>());
  CHECK(out.at("c_u").get<double>() == 2.0);
  // the tail's exponents: <v>^{-1}<u>^{-2} seen from the three curve classes
  for (const auto& row : out.at("rows")) {
    const std::string kind = row.at("kind").get<std::string>();
    const double fitted = row.at("fitted").get<double>();
    const double stderr_ = row.at("stderr").get<double>();
    if (kind == "r_const") CHECK(std::abs(fitted - -3.0) < 0.4);
    if (kind == "u_const") CHECK(std::abs(fitted - -1.0) < 0.25);
    if (kind == "lambda") CHECK(std::abs(fitted - -3.0) < 0.4);
    CHECK(stderr_ < 0.01);
  }
  CHECK(slurp(dir / "verify.md").find("aggregate: pass") != std::string::npos);
}

TEST_CASE("verify exits 3 when the prediction disagrees with the tail") {
  const auto dir = fresh_dir("verify_fail");
  json cfg = potential_config(350.0);
  cfg["calculus"] = {{"sigma", "5"}, {"p", 9}};
  spit(dir / "run.json", cfg.dump(2));
  const auto r = run_cli(
      dir, "--config " + q(dir / "run.json") + " --out " + q(dir) + " verify");
  CHECK(r.code == 3);
  const json out = read_json(dir / "verify.json");
  CHECK(out.at("verdict").get<std::string>() == "fail");
  CHECK(out.at("c_u").get<double>() == 6.0);
}

TEST_CASE("report assembles the dossier from available artifacts") {
  const auto dir = fresh_dir("report");
  auto r = run_cli(dir, "--out " + q(dir) +
                            " predict --sigma 7/20 --gamma 1/10 --p 4 "
                            "--region global");
  REQUIRE(r.code == 0);
  r = run_cli(dir,
              "--out " + q(dir) + " simulate --dr 0.0625 --t-final 4 "
              "--amplitude 1");
  REQUIRE(r.code == 0);

  r = run_cli(dir, "--out " + q(dir) + " report");
  CHECK(r.code == 0);
  const std::string md = slurp(dir / "report.md");
  CHECK(md.find("## simulation") != std::string::npos);
  CHECK(md.find("## prediction") != std::string::npos);
  CHECK(md.find("c_u = 27/20") != std::string::npos);
  CHECK(r.out.find("run dossier") != std::string::npos);

  const auto empty = fresh_dir("report_empty");
  r = run_cli(empty, "--out " + q(empty) + " report");
  CHECK(r.code == 1);
  CHECK(json::parse(r.err).at("error").get<std::string>() == "ConfigError");
}

TEST_CASE("explicit flags override config file values") {
  const auto dir = fresh_dir("precedence");
  json cfg;
  cfg["calculus"] = {
      {"sigma", "3/10"}, {"gamma", "1/10"}, {"p", 4}, {"region", "interior"}};
  spit(dir / "run.json", cfg.dump(2));

  auto r = run_cli(dir, "predict --config " + q(dir / "run.json") + " --out " +
                            q(dir));
  CHECK(r.code == 0);
  CHECK(read_json(dir / "predict.json").at("c_u_exact") == "13/10");

  r = run_cli(dir, "predict --config " + q(dir / "run.json") + " --out " +
                       q(dir) + " --sigma 7/20");
  CHECK(r.code == 0);
  CHECK(read_json(dir / "predict.json").at("c_u_exact") == "27/20");
}
