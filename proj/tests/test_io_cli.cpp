#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "catch_amalgamated.hpp"
#include "rwre/rwre.hpp"

using namespace rwre;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rwre_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int lab(const std::string& args) {
  const std::string cmd = std::string(RWRE_LAB_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const std::string& name) { return std::string(RWRE_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST_CASE("environment round trip") {
  const fs::path dir = scratch("env");
  const Environment env = sample_environment(EnvSpec::uniform(0.5, 0.95), {-37, 80}, 99);
  save_environment(env, dir / "e");
  CHECK(fs::file_size(dir / "e.bin") == 8 * 118);
  const Environment back = load_environment(dir / "e");
  CHECK(back.omega() == env.omega());
  CHECK(back.window() == env.window());
  CHECK(back.seed() == 99);
  CHECK(back.spec().params().kind == EnvKind::uniform_interval);

  fs::resize_file(dir / "e.bin", 8 * 100);
  CHECK_THROWS_AS(load_environment(dir / "e"), IoError);
  CHECK_THROWS_AS(load_environment(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.env = EnvSpec::discrete({0.45, 0.7, 0.95}, {0.2, 0.5, 0.3}).params();
  c.sizes = {100, 900};
  c.grid = {{0.5, -1.0}, {2.0, 0.25}};
  c.seed = 12345678901234ULL;
  c.checks = {"AC-3", "AC-7"};
  const ExperimentConfig d = config_from_json(config_to_json(c));
  CHECK(config_to_json(d) == config_to_json(c));
  CHECK(config_hash(d) == config_hash(c));
  ExperimentConfig e = c;
  e.out = "elsewhere";
  CHECK(config_hash(e) == config_hash(c));
  e.seed = 1;
  CHECK(config_hash(e) != config_hash(c));

  CHECK_THROWS_AS(config_from_json(json{{"replica", 5}}), SpecError);
  CHECK_THROWS_AS(config_from_json(json{{"env", {{"kind", "two-point"}, {"atoms", {0.9, 0.6}}, {"typo", 1}}}}),
                  SpecError);
  CHECK_THROWS_AS(config_from_json(json{{"sizes", {0}}}), SpecError);
  CHECK_THROWS_AS(config_from_json(json{{"checks", {"AC-99"}}}), SpecError);
  CHECK_THROWS_AS(config_from_json(json{{"version", 2}}), SpecError);
  CHECK_THROWS_AS(config_from_json(json{{"env", {{"kind", "two-point"}, {"atoms", {0.95, 0.35}}}}}), SpecError);
  for (const char* f : {"default.json", "constant.json", "verify_quick.json", "verify_full.json"})
    CHECK_NOTHROW(config_from_json(read_json(config(f))));
}

TEST_CASE("number formatting") {
  CHECK(fmt_double(0.0) == "0");
  CHECK(fmt_double(-0.0) == "0");
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(fmt_double(x)) == x);
}

TEST_CASE("worker resolution") {
  ::unsetenv(kWorkersEnv);
  CHECK(resolve_workers(std::nullopt) >= 1);
  ::setenv(kWorkersEnv, "3", 1);
  CHECK(resolve_workers(std::nullopt) == 3);
  CHECK(resolve_workers(5) == 5);
  ::setenv(kWorkersEnv, "abc", 1);
  CHECK_THROWS(resolve_workers(std::nullopt));
  CHECK_THROWS(resolve_workers(0));
  ::unsetenv(kWorkersEnv);
}

TEST_CASE("parallel_for") {
  std::vector<std::uint64_t> a(500), b(500);
  parallel_for(500, 1, [&](std::int64_t i) { a[static_cast<std::size_t>(i)] = task_seed(3, StreamTag::synthetic, static_cast<std::uint64_t>(i)); });
  parallel_for(500, 7, [&](std::int64_t i) { b[static_cast<std::size_t>(i)] = task_seed(3, StreamTag::synthetic, static_cast<std::uint64_t>(i)); });
  CHECK(a == b);
  CHECK_THROWS_AS(parallel_for(10, 4, [](std::int64_t i) {
                    if (i == 6) throw std::runtime_error("six");
                  }),
                  std::runtime_error);
}

TEST_CASE("lab verify is reproducible across worker counts") {
  const fs::path a = scratch("verify_a"), b = scratch("verify_b");
  CHECK(lab("verify --config " + config("verify_quick.json") + " --workers 1 --out " + a.string()) == 0);
  ::setenv(kWorkersEnv, "3", 1);
  CHECK(lab("verify --config " + config("verify_quick.json") + " --out " + b.string()) == 0);
  ::unsetenv(kWorkersEnv);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "report.txt") == slurp(b / "report.txt"));
  const json rep = read_json(a / "report.json");
  CHECK(rep.at("passed").get<bool>());
  CHECK(rep.at("checks").size() == 3);
  CHECK(fs::exists(a / "manifest.json"));
  CHECK(fs::exists(a / "config.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("lab theory and env on a constant environment") {
  const fs::path out = scratch("constant");
  REQUIRE(lab("theory --config " + config("constant.json") + " --out " + out.string()) == 0);
  const json t = read_json(out / "theory.json");
  CHECK_THAT(t.at("v_P").get<double>(), WithinAbs(0.5, 1e-15));
  CHECK_THAT(t.at("sigma1_sq").get<double>(), WithinAbs(0.75, 1e-12));
  CHECK(t.at("sigma2_sq").get<double>() == 0.0);
  CHECK(fs::exists(out / "gamma.csv"));
  CHECK(fs::exists(out / "psi.csv"));

  REQUIRE(lab("env --config " + config("constant.json") + " --seed 3 --out " + out.string()) == 0);
  const Environment env = load_environment(out / "env_0");
  for (double w : env.omega()) CHECK(w == 0.75);
  std::ifstream csv(out / "env_0_profiles.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "site,omega,a,s,var_T1,h,f");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() >= 6);
    CHECK(cells[5] == "0");
    ++rows;
  }
  CHECK(rows > 0);
  CHECK(read_json(out / "config.json").at("seed").get<std::uint64_t>() == 3);
  fs::remove_all(out);
}

TEST_CASE("lab exit codes") {
  CHECK(lab("") == 1);
  CHECK(lab("frobnicate") == 1);
  CHECK(lab("theory --config /nonexistent/config.json") == 1);
  CHECK(lab("theory --workers 0 --config " + config("constant.json")) == 1);
}
