#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "chaosflow/harness.hpp"
#include "json.hpp"

using namespace chaosflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chaosflow_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string message_of(const std::string& text) {
  try {
    parse_config_text(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSmall = R"(kind = propagate
basis.shell_radius = 1
grid.base_radius = 3
grid.growth_cap = 5
propagator.n_t = 2
propagator.n_w = 4
propagator.N = 2
propagator.dt = 1/64
propagator.output_times = 0.5, 1
)";

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c = parse_config_text("kind = propagate\n");
  CHECK(c.covariance.dim == 2);
  CHECK(c.covariance.alpha == 1.0);
  CHECK(c.covariance.a == 0.0);
  CHECK(c.shell_radius == 2);
  CHECK(c.conventions.hermite == HermiteConvention::Rodrigues);
  CHECK(c.conventions.noise_sign == 1);
  CHECK_NOTHROW(c.validate());
  CHECK(!c.echo().empty());
}

TEST_CASE("parser diagnostics") {
  CHECK_THROWS_WITH_AS(parse_config_text("kind = energy\nfoo.bar = 1\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("propagator.N = 1\npropagator.N = 2\n"), doctest::Contains("repeats"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("propagator.N = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
  CHECK(message_of("kind = energy\ncovariance.alpha = 2.5\n").find("violates 0 < α < 2") != std::string::npos);
  CHECK(message_of("kind = energy\npropagator.nu = -0.1\n").find("violates ν ≥ 0") != std::string::npos);
  CHECK(message_of("kind = energy\ncovariance.a = 1\n").find("divergence-free") != std::string::npos);
  CHECK(message_of("kind = nonsense\n").find("not one of") != std::string::npos);
  CHECK(message_of("kind = energy\npropagator.output_times = 0.3, 1\npropagator.dt = 0.25\n").find("multiple of dt") !=
        std::string::npos);
  CHECK(message_of("kind = energy\ngrid.growth_cap = 5\n").find("growth_cap") != std::string::npos);

  const ExperimentConfig c = parse_config_text("# comment\nkind = energy  # trailing\npropagator.dt = 1/512\n");
  CHECK(c.propagator.dt == 1.0 / 512);
}

TEST_CASE("shipped configs parse and validate") {
  const fs::path dir = CHAOSFLOW_CONFIG_DIR;
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".cfg") continue;
    CAPTURE(e.path().string());
    // the kind normally comes from the command line
    CHECK_NOTHROW(parse_config_text("kind = energy\n" + slurp(e.path())).validate());
    ++n;
  }
  CHECK(n >= 4);
}

TEST_CASE("propagate writes a manifest and is byte-deterministic") {
  ExperimentConfig c = parse_config_text(kSmall);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  c.out_dir = a.string();
  const RunResult ra = run_experiment(c);
  c.out_dir = b.string();
  c.workers = 3;
  const RunResult rb = run_experiment(c);
  CHECK(ra.exit_code == 0);
  CHECK(rb.exit_code == 0);
  for (const std::string f : {"indices.csv", "coefficients.csv", "moments.csv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto j = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(j["status"] == "pass");
  CHECK(j["version"] == kVersion);
  CHECK(j["wall_clock_seconds"].is_number());
  CHECK(j["files"].size() == 3);
  CHECK(j["config"]["propagator.N"] == "2");
  CHECK(j["breaches"].empty());
  const std::string coeffs = slurp(a / "coefficients.csv");
  CHECK(coeffs.rfind("#", 0) == 0);
  CHECK(coeffs.find("alpha_rank,t,z1,z2,re,im") != std::string::npos);
}

TEST_CASE("energy run without noise closes the ledger") {
  ExperimentConfig c = parse_config_text(kSmall);
  c.kind = "energy";
  c.propagator.n_w = 0;
  c.propagator.dt = 1.0 / 512;
  c.out_dir = scratch("energy").string();
  const RunResult r = run_experiment(c);
  CHECK(r.exit_code == 0);
  std::istringstream in(slurp(fs::path(c.out_dir) / "energy.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,e_l2,dissipation,tail,time_leak,residual,closed_residual");
  int rows = 0;
  while (std::getline(in, line)) {
    const double residual = std::stod(line.substr(line.rfind(',', line.rfind(',') - 1) + 1));
    CHECK(std::abs(residual) <= 1e-10);
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("validate-basis passes its checks") {
  ExperimentConfig c = parse_config_text("kind = validate-basis\nbasis.shell_radius = 1\n");
  c.out_dir = scratch("basis").string();
  const RunResult r = run_experiment(c);
  CHECK(r.exit_code == 0);
  const std::string rep = slurp(fs::path(c.out_dir) / "basis_report.csv");
  CHECK(rep.rfind("check,value,tolerance,pass\n", 0) == 0);
  CHECK(rep.find(",0\n") == std::string::npos);
}

TEST_CASE("non-finite coefficients fail closed") {
  ExperimentConfig c = parse_config_text(kSmall);
  c.initial.preset = "single-mode";
  c.initial.amplitude = 1e300;
  c.kind = "energy";
  c.out_dir = scratch("overflow").string();
  const RunResult r = run_experiment(c);
  CHECK(r.exit_code == 1);
  CHECK(!r.breaches.empty());
  const auto j = nlohmann::json::parse(slurp(fs::path(c.out_dir) / "manifest.json"));
  CHECK(j["status"] == "invariant-breach");
}
