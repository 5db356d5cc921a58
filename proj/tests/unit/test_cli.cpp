#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hardylab/config.hpp"

using namespace hardylab;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HARDYLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("hardylab_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parser: sections flatten, comments, type errors") {
  const KeyValueConfig kv = KeyValueConfig::parse_text(
      "# comment\n[grid]\ndim = 1\nsamples=256\n[time]\nk_max = 10 ; trailing\n");
  CHECK(kv.get_int("grid_dim", 0) == 1);
  CHECK(kv.get_int("grid_samples", 0) == 256);
  CHECK(kv.get_int("time_k_max", 0) == 10);
  CHECK(kv.get_int("missing", 7) == 7);

  CHECK_THROWS_AS(KeyValueConfig::parse_text("novalue\n"), ConfigError);
  const KeyValueConfig bad = KeyValueConfig::parse_text("[grid]\ndim = zebra\n");
  CHECK_THROWS_AS(bad.get_int("grid_dim", 0), ConfigError);
}

TEST_CASE("RunConfig: geometry violations name the failed inequality") {
  KeyValueConfig kv;
  kv.set("grid_samples", "255");
  try {
    RunConfig::from(kv);
    FAIL("odd N must be rejected");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("even") != std::string::npos);
  }

  // sweep geometry is checked where the sweep is consumed
  KeyValueConfig kv2;
  kv2.set("grid_half_width", "4");
  kv2.set("sweep_radii", "2.0");
  const RunConfig cfg2 = RunConfig::from(kv2);
  CHECK_THROWS_AS(cfg2.validate_radius_sweep(), ConfigError);
  CHECK_THROWS_AS(cfg2.validate_x0_sweep(), ConfigError);
}

TEST_CASE("cli: exit codes distinguish config errors from numeric failures") {
  const fs::path dir = temp_dir("exitcodes");
  write(dir / "bad.ini", "[grid]\nsamples = 255\n");
  CHECK(run_cli("selftest " + (dir / "bad.ini").string()) == 2);
  CHECK(run_cli("no-such-subcommand") != 0);
  CHECK(run_cli("hp-norm " + (dir / "missing.ini").string()) == 2);
}

TEST_CASE("cli: make-atom, validate, hp-norm round trip") {
  const fs::path dir = temp_dir("roundtrip");
  write(dir / "run.ini",
        "[grid]\ndim=1\nhalf_width=8\nsamples=512\n"
        "[atom]\np=0.8\nq=2\nmoments=1\nradius=0.5\n"
        "[molecule]\np=0.8\nq=2\ndelta=1.0\ns=1.2\nradius=0.5\n"
        "[output]\ndir=" + (dir / "out").string() + "\n");
  REQUIRE(run_cli("make-atom " + (dir / "run.ini").string()) == 0);
  CHECK(fs::exists(dir / "out" / "atom.field"));
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "make-atom.json"));
  CHECK(summary.at("pass").get<bool>());

  // feed the atom back through validate
  write(dir / "validate.ini",
        "[grid]\ndim=1\nhalf_width=8\nsamples=512\n"
        "[atom]\np=0.8\nq=2\nmoments=1\nradius=0.5\n"
        "[molecule]\np=0.8\nq=2\ndelta=1.0\ns=1.2\nradius=0.5\n"
        "[experiment]\ninput_field=" + (dir / "out" / "atom.field").string() + "\n"
        "[output]\ndir=" + (dir / "out2").string() + "\n");
  CHECK(run_cli("validate " + (dir / "validate.ini").string()) == 0);

  CHECK(run_cli("hp-norm " + (dir / "validate.ini").string()) == 0);
  const auto hp = nlohmann::json::parse(slurp(dir / "out2" / "hp-norm.json"));
  CHECK(hp.at("hp_quasinorm").get<double>() > 0.0);
}

TEST_CASE("cli: decompose on the shipped molecule fixture") {
  const fs::path fixture = fs::path(HARDYLAB_FIXTURE_DIR) / "decompose.ini";
  REQUIRE(fs::exists(fixture));
  const fs::path dir = temp_dir("decomp");
  CHECK(run_cli("decompose " + fixture.string() + " --out " + (dir / "out").string()) == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "decompose.json"));
  CHECK(summary.at("pass").get<bool>());
  CHECK(summary.at("reconstruction_residual").get<double>() <= 1e-8);
}

TEST_CASE("cli: threaded sweeps reproduce sequential reports byte for byte") {
  const fs::path dir = temp_dir("threads");
  write(dir / "run.ini",
        "[grid]\ndim=1\nhalf_width=16\nsamples=512\n"
        "[operator]\nkind=local_riesz\n"
        "[theorem]\np=0.9\n"
        "[molecule]\np=0.9\nq=2\ndelta=1.0\ns=1.2\nradius=0.5\n"
        "[sweep]\nradii=0.5,0.25\nseeds=2\n");
  const std::string cfg = (dir / "run.ini").string();
  REQUIRE(run_cli("hp-ratio " + cfg + " --threads 1 --out " + (dir / "seq").string()) == 0);
  REQUIRE(run_cli("hp-ratio " + cfg + " --threads 4 --out " + (dir / "par").string()) == 0);
  CHECK(slurp(dir / "seq" / "hp-ratio.csv") == slurp(dir / "par" / "hp-ratio.csv"));
  CHECK(slurp(dir / "seq" / "hp-ratio.json") == slurp(dir / "par" / "hp-ratio.json"));
}

TEST_CASE("cli: selftest reports every module and reruns byte-identically") {
  const fs::path dir = temp_dir("selftest");
  const fs::path cfg = fs::path(HARDYLAB_FIXTURE_DIR) / "default.ini";
  REQUIRE(fs::exists(cfg));
  REQUIRE(run_cli("selftest " + cfg.string() + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("selftest " + cfg.string() + " --out " + (dir / "b").string()) == 0);

  const auto ja = nlohmann::json::parse(slurp(dir / "a" / "selftest.json"));
  for (const char* module : {"grid_core", "heat_maximal", "function_spaces", "atoms_molecules",
                             "cz_operators", "theorem_harness"})
    CHECK(ja.at("modules").contains(module));

  CHECK(slurp(dir / "a" / "selftest.csv") == slurp(dir / "b" / "selftest.csv"));
  CHECK(slurp(dir / "a" / "selftest.json") == slurp(dir / "b" / "selftest.json"));
}
