#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "flowsr/cli/config.hpp"
#include "flowsr/cli/run_dir.hpp"
#include "flowsr/core/errors.hpp"

using namespace flowsr;
using namespace flowsr::cli;

namespace {

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("flowsr_cli_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

#ifdef FLOWSR_CLI_PATH
int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string cmd = std::string(FLOWSR_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  if (output) *output = out;
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("config precedence: defaults < file < explicit set") {
  const auto dir = temp_dir("cfg");
  RunConfig cfg;
  CHECK(cfg.get_int("rl.k") == 24);             // default (paper value)
  CHECK(cfg.get_double("reward.gamma") == 7.0);  // default (paper value)
  CHECK(cfg.get_double("rl.lr") == doctest::Approx(3e-4));
  CHECK(cfg.get_int("rl.rank") == 32);
  CHECK(cfg.get_double("rl.alpha") == 64.0);
  CHECK(cfg.get_double("rl.mean_threshold") == 0.9);
  CHECK(cfg.get_double("rl.var_threshold") == 0.05);
  CHECK(cfg.get_int("sampler.train_steps") == 6);
  CHECK(cfg.get_int("sampler.infer_steps") == 40);

  {
    std::ofstream file(dir / "run.cfg");
    file << "# comment line\n";
    file << "rl.k = 12\n";
    file << "reward.gamma = 5\n";
  }
  cfg.load_file(dir / "run.cfg");
  CHECK(cfg.get_int("rl.k") == 12);
  CHECK(cfg.get_double("reward.gamma") == 5.0);

  cfg.set_kv("rl.k=8");
  CHECK(cfg.get_int("rl.k") == 8);
  CHECK(cfg.get_double("reward.gamma") == 5.0);  // untouched by the flag

  std::filesystem::remove_all(dir);
}

TEST_CASE("config rejects unknown keys and bad values") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.set("nope.key", "1"), doctest::Contains("nope.key"), ConfigError);
  CHECK_THROWS_AS(cfg.set("rl.k", "twelve"), ConfigError);
  CHECK_THROWS_AS(cfg.set_kv("no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("bogus"), ConfigError);

  const auto dir = temp_dir("badcfg");
  {
    std::ofstream file(dir / "bad.cfg");
    file << "unknown.key = 3\n";
  }
  CHECK_THROWS_WITH_AS(cfg.load_file(dir / "bad.cfg"), doctest::Contains("unknown.key"),
                       ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config echo parses back to an identical config") {
  RunConfig cfg;
  cfg.set_kv("rl.k=10");
  cfg.set_kv("data.kinds=shapes");
  const auto dir = temp_dir("echo");
  {
    std::ofstream file(dir / "echo.cfg");
    file << cfg.echo();
  }
  RunConfig back;
  back.load_file(dir / "echo.cfg");
  CHECK(back.echo() == cfg.echo());
  std::filesystem::remove_all(dir);
}

TEST_CASE("run dirs are append-only and digests are stable") {
  const auto root = temp_dir("runs");
  const auto dir = make_run_dir(root, "demo");
  CHECK(std::filesystem::exists(dir));

  // claiming a fresh explicit dir works; reusing a non-empty one fails
  const auto fresh = root / "explicit";
  claim_run_dir(fresh);
  {
    std::ofstream f(fresh / "artifact.bin");
    f << "payload";
  }
  CHECK_THROWS_AS(claim_run_dir(fresh), InputError);

  const auto d1 = fnv1a_digest(fresh / "artifact.bin");
  const auto d2 = fnv1a_digest(fresh / "artifact.bin");
  CHECK(d1 == d2);
  CHECK(d1.size() == 16);

  CHECK(is_volatile_artifact("sft_loss.jsonl"));
  CHECK(is_volatile_artifact("fr_rl_log.jsonl"));
  CHECK(!is_volatile_artifact("model.bin"));
  CHECK(!is_volatile_artifact("report.jsonl"));

  write_exit_summary(fresh, "demo", true);
  std::ifstream is(fresh / "exit_summary.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j.at("ok") == true);
  CHECK(j.at("artifacts").contains("artifact.bin"));

  std::filesystem::remove_all(root);
}

#ifdef FLOWSR_CLI_PATH

TEST_CASE("cli: invalid config key exits nonzero and names the key") {
  const auto root = temp_dir("cli_badkey");
  std::string out;
  const int rc = run_cli("synth-data --run-dir " + (root / "r").string() +
                             " --set data.n_pairs=2 --set bogus.key=1",
                         &out);
  CHECK(rc != 0);
  CHECK(out.find("bogus.key") != std::string::npos);
  std::filesystem::remove_all(root);
}

TEST_CASE("cli: nr stage without an FR adapter names the missing stage") {
  const auto root = temp_dir("cli_nr");
  // a dataset and checkpoint are not even touched: the precondition fires first
  std::string out;
  const int rc = run_cli("train-rl --stage nr --data /nonexistent --base-ckpt /nonexistent"
                         " --run-dir " +
                             (root / "r").string(),
                         &out);
  CHECK(rc != 0);
  CHECK(out.find("FR adapter required") != std::string::npos);
  std::filesystem::remove_all(root);
}

TEST_CASE("cli: synth-data smoke run writes datasets, config echo and summary") {
  const auto root = temp_dir("cli_synth");
  std::string out;
  const int rc = run_cli(
      "synth-data --run-dir " + (root / "r").string() +
          " --set data.n_pairs=3 --set data.n_holdout=2 --set data.n_unpaired=2 --set data.hr_size=32",
      &out);
  REQUIRE(rc == 0);
  CHECK(std::filesystem::exists(root / "r" / "config.effective"));
  CHECK(std::filesystem::exists(root / "r" / "datasets" / "train" / "manifest.jsonl"));
  CHECK(std::filesystem::exists(root / "r" / "datasets" / "unpaired" / "meta.json"));
  std::ifstream is(root / "r" / "exit_summary.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j.at("ok") == true);
  CHECK(j.at("subcommand") == "synth-data");

  // rerun with the same seed into a second dir: identical artifact digests
  const int rc2 = run_cli(
      "synth-data --run-dir " + (root / "r2").string() +
          " --set data.n_pairs=3 --set data.n_holdout=2 --set data.n_unpaired=2 --set data.hr_size=32",
      &out);
  REQUIRE(rc2 == 0);
  const auto da = digest_artifacts(root / "r");
  const auto db = digest_artifacts(root / "r2");
  CHECK(da == db);

  std::filesystem::remove_all(root);
}

#endif  // FLOWSR_CLI_PATH
