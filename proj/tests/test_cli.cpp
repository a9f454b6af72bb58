#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

fs::path workspace() {
  auto p = fs::temp_directory_path() / "hlglm_cli_tests";
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  std::string cmd = std::string(HLGLM_CLI_PATH) + " " + args + " > " +
                    log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

// training CSV shared by the command tests; generated on first use
fs::path ensure_train(const fs::path& dir) {
  auto csv = dir / "train.csv";
  if (fs::exists(csv)) return csv;
  write_file(dir / "gen.json", R"({
    "simulate": {"harness": "generate", "generator": "hierarchical",
                 "d": 2, "levels": 3, "n": 400, "rho": 0.3, "sigma": 1.0,
                 "p": 2, "seed": 7}
  })");
  int rc = run_cli("simulate --config " + (dir / "gen.json").string() +
                       " --out " + csv.string(),
                   dir / "gen_log.txt");
  REQUIRE(rc == 0);
  return csv;
}

}  // namespace

TEST_CASE("cli: generate, fit, eval, predict round trip") {
  auto dir = workspace();
  auto log = dir / "log.txt";
  auto train = ensure_train(dir);
  REQUIRE(fs::exists(train));

  write_file(dir / "fit.json", R"({
    "family": "gaussian",
    "response": "y",
    "features": ["x1"],
    "lattice": [{"name": "g0", "kind": "categorical"},
                {"name": "g1", "kind": "categorical"}],
    "fit": {"truncation": 1, "seed": 3},
    "regularization": {"scheme": "adaptive"}
  })");
  CHECK(run_cli("fit --config " + (dir / "fit.json").string() + " --data " +
                    (dir / "train.csv").string() + " --out " +
                    (dir / "model.hlgm").string(),
                log) == 0);
  REQUIRE(fs::exists(dir / "model.hlgm"));
  std::string fit_out = read_all(log);
  CHECK(fit_out.find("config-hash:") != std::string::npos);
  CHECK(fit_out.find("df") != std::string::npos);

  CHECK(run_cli("eval --model " + (dir / "model.hlgm").string() + " --data " +
                    (dir / "train.csv").string() + " --out " +
                    (dir / "metrics.csv").string(),
                log) == 0);
  std::string metrics = read_all(dir / "metrics.csv");
  CHECK(metrics.find("mean_nll") != std::string::npos);

  CHECK(run_cli("predict --model " + (dir / "model.hlgm").string() +
                    " --data " + (dir / "train.csv").string() + " --out " +
                    (dir / "pred.csv").string(),
                log) == 0);
  std::string pred = read_all(dir / "pred.csv");
  // header plus one line per row
  CHECK(std::count(pred.begin(), pred.end(), '\n') == 401);
  CHECK(pred.rfind("row,", 0) == 0);
}

TEST_CASE("cli: select-order runs the sweep end to end") {
  auto dir = workspace();
  auto log = dir / "sel_log.txt";
  ensure_train(dir);
  write_file(dir / "sel.json", R"({
    "family": "gaussian",
    "response": "y",
    "features": ["x1"],
    "lattice": [{"name": "g0", "kind": "categorical"},
                {"name": "g1", "kind": "categorical"}],
    "fit": {"truncation": 1, "seed": 3},
    "regularization": {"scheme": "adaptive"},
    "select": {"kmax": 2},
    "eval": {"waic_draws": 150, "seed": 1}
  })");
  CHECK(run_cli("select-order --config " + (dir / "sel.json").string() +
                    " --data " + (dir / "train.csv").string(),
                log) == 0);
  std::string out = read_all(log);
  CHECK(out.find("selected") != std::string::npos);
}

TEST_CASE("cli: truncation above the lattice order is rejected early") {
  auto dir = workspace();
  auto log = dir / "trunc_log.txt";
  ensure_train(dir);
  write_file(dir / "deep.json", R"({
    "family": "gaussian",
    "response": "y",
    "features": ["x1"],
    "lattice": [{"name": "g0", "kind": "categorical"},
                {"name": "g1", "kind": "categorical"}],
    "fit": {"truncation": 3},
    "regularization": {"scheme": "adaptive"}
  })");
  CHECK(run_cli("fit --config " + (dir / "deep.json").string() + " --data " +
                    (dir / "train.csv").string() + " --out " +
                    (dir / "no.hlgm").string(),
                log) == 20);
  CHECK(read_all(log).find("invalid_truncation") != std::string::npos);
}

TEST_CASE("cli: bin budget enforcement with override") {
  auto dir = workspace();
  auto log = dir / "bin_log.txt";
  std::ofstream csv(dir / "cont.csv", std::ios::trunc);
  csv << "u,v,w,y\n";
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> un(0.0, 1.0);
  for (int i = 0; i < 1000; ++i)
    csv << un(rng) << "," << un(rng) << "," << un(rng) << "," << un(rng)
        << "\n";
  csv.close();

  write_file(dir / "bin.json", R"({
    "family": "gaussian",
    "response": "y",
    "features": [],
    "lattice": [{"name": "u", "kind": "binned", "levels": 6},
                {"name": "v", "kind": "binned", "levels": 6},
                {"name": "w", "kind": "binned", "levels": 6}]
  })");
  std::string base = "bin --config " + (dir / "bin.json").string() +
                     " --data " + (dir / "cont.csv").string();
  CHECK(run_cli(base, log) == 13);
  CHECK(read_all(log).find("infeasible_lattice") != std::string::npos);
  CHECK(run_cli(base + " --force --out " + (dir / "lattice.json").string(),
                log) == 0);
  CHECK(fs::exists(dir / "lattice.json"));
}

TEST_CASE("cli: unknown configuration keys fail loudly") {
  auto dir = workspace();
  auto log = dir / "cfg_log.txt";
  ensure_train(dir);
  write_file(dir / "typo.json", R"({
    "family": "gaussian",
    "response": "y",
    "features": [],
    "lattice": [{"name": "g0", "kind": "categorical"}],
    "regularisation": {"scheme": "adaptive"}
  })");
  CHECK(run_cli("fit --config " + (dir / "typo.json").string() + " --data " +
                    (dir / "train.csv").string() + " --out " +
                    (dir / "no.hlgm").string(),
                log) == 80);
  CHECK(read_all(log).find("regularisation") != std::string::npos);
}
