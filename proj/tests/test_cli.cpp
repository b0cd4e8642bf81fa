#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sys/wait.h>

#include "support.hpp"

#ifndef ECGADV_CLI
#error "ECGADV_CLI must name the command-line binary"
#endif

namespace {

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Result run(const std::string& args, const testing::TempDir& dir, const std::string& env = "") {
  const auto err = dir / "stderr.txt";
  const std::string cmd = env + " '" + std::string(ECGADV_CLI) + "' " + args + " > '" + (dir / "stdout.txt").string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

// Short segments keep the end-to-end runs fast.
const std::string kSmall = "--set data.length=600 --set data.per_class=4 -v 0 ";

}  // namespace

TEST_CASE("help lists the configuration keys") {
  testing::TempDir dir("cli-help");
  const auto r = run("--help", dir);
  CHECK(r.code == 0);
  const auto out = slurp(dir / "stdout.txt");
  for (const auto* key : {"seed = 1", "type1.c = 0.1", "type2.lambda = 10", "train.epochs", "grid.n_shifts = 200"}) {
    CHECK(out.find(key) != std::string::npos);
  }
  for (const auto* sub : {"synth", "train", "attack1", "attack2", "eval", "sweep", "bench"}) {
    CHECK(out.find(sub) != std::string::npos);
  }
}

TEST_CASE("synth is deterministic and writes a manifest") {
  testing::TempDir dir("cli-synth");
  const auto a = dir / "a", b = dir / "b";
  REQUIRE(run("synth --per-class 5 --seed 1 --set data.length=600 -v 0 --out '" + a.string() + "'", dir).code == 0);
  REQUIRE(run("synth --per-class 5 --seed 1 --set data.length=600 -v 0 --out '" + b.string() + "'", dir).code == 0);
  for (const auto* f : {"dataset.csv", "train.csv", "test.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "synth.manifest.json"));
  CHECK(manifest["command"] == "synth");
  CHECK(manifest["seed"] == 1);
  const auto files = manifest["files"];
  CHECK(std::find(files.begin(), files.end(), "dataset.csv") != files.end());
  CHECK(manifest["config"]["data.per_class"] == "5");
  // the echoed config reproduces the run
  CHECK(std::filesystem::exists(a / "synth.config"));
  const auto c = dir / "c";
  REQUIRE(run("synth -v 0 --config '" + (a / "synth.config").string() + "' --out '" + c.string() + "'", dir).code == 0);
  CHECK(slurp(a / "dataset.csv") == slurp(c / "dataset.csv"));
}

TEST_CASE("output directory defaults to the environment variable") {
  testing::TempDir dir("cli-env");
  const auto target = dir / "from-env";
  const auto r = run("synth " + kSmall, dir, "ECGADV_OUT='" + target.string() + "'");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(target / "dataset.csv"));
}

TEST_CASE("validation errors exit with code 1") {
  testing::TempDir dir("cli-errors");
  const auto out = "--out '" + (dir / "o").string() + "' ";

  const auto unknown = run("synth --set nope=1 " + out, dir);
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("nope") != std::string::npos);

  std::ofstream(dir / "bad.cfg") << "seed = 2\n\ntype1.cee = 4\n";
  const auto cfg = run("synth --config '" + (dir / "bad.cfg").string() + "' " + out, dir);
  CHECK(cfg.code == 1);
  CHECK(cfg.err.find("line 3") != std::string::npos);

  const auto range = run("synth --set data.train_fraction=2 " + out, dir);
  CHECK(range.code == 1);

  const auto no_weights = run("eval " + kSmall + out, dir);
  CHECK(no_weights.code == 1);
  CHECK(no_weights.err.find("weights") != std::string::npos);

  CHECK(run("frobnicate", dir).code == 1);
  CHECK(run("sweep --kind nonsense " + kSmall + "--weights '" + (dir / "missing.bin").string() + "' " + out, dir).code == 1);
}

TEST_CASE("train, attack and evaluate end to end") {
  testing::TempDir dir("cli-e2e");
  const auto out = "--out '" + (dir / "o").string() + "' ";
  const auto small = kSmall + "--set train.epochs=2 --set model.block_channels=4,8 ";
  REQUIRE(run("synth " + small + out, dir).code == 0);
  REQUIRE(run("train " + small + out, dir).code == 0);
  CHECK(std::filesystem::exists(dir / "o" / "model.bin"));
  CHECK(std::filesystem::exists(dir / "o" / "train_log.csv"));

  const auto same = run("attack1 --target N --id syn-N-0 " + small + out, dir);
  CHECK(same.code == 1);
  CHECK(same.err.find("TargetEqualsSource") != std::string::npos);

  CHECK(run("eval " + small + out, dir).code == 0);
  CHECK(std::filesystem::exists(dir / "o" / "eval.csv"));

  const auto a2 = run("attack2 --target A --id syn-N-1 --set type2.max_iters=3 --set type2.shifts_per_step=2 " +
                          small + out,
                      dir);
  // the tiny model may already call syn-N-1 "A"; either outcome is a clean exit
  CHECK((a2.code == 0 || a2.code == 1));
  if (a2.code == 0) {
    const auto ev = run("eval --artifact '" + (dir / "o" / "perturbation.bin").string() +
                            "' --set grid.n_shifts=3 --set grid.victims_per_pair=2 " + small + out,
                        dir);
    CHECK(ev.code == 0);
    CHECK(std::filesystem::exists(dir / "o" / "robustness.csv"));
  }
}
