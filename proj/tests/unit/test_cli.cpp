#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "triage/cli.hpp"

namespace fs = std::filesystem;
using namespace triage;

namespace {

const std::string kFixtures = TRIAGE_FIXTURES;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("triage-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::vector<std::string> kSmall = {"--set", "train.hidden1=16", "--set", "train.hidden2=8",
                                         "--set", "train.epochs_max=4", "--seed", "3"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// ingest -> split -> featurize -> train in `dir`.
void build_pipeline(const fs::path& dir) {
  const auto s = [&](const char* f) { return (dir / f).string(); };
  REQUIRE(cli({"ingest", "--report", kFixtures + "/pipeline_report.json", "--labels",
               kFixtures + "/pipeline_labels.jsonl", "--out", s("store.jsonl")})
              .code == 0);
  REQUIRE(cli({"split", "--store", s("store.jsonl"), "--out", s("splits.jsonl"), "--seed", "3"}).code == 0);
  REQUIRE(cli({"featurize", "--store", s("store.jsonl"), "--metadata", kFixtures + "/pipeline_metadata.jsonl",
               "--out", s("features.jsonl"), "--manifest", s("manifest.tsv")})
              .code == 0);
  const auto r = cli(with({"train", "--store", s("store.jsonl"), "--splits", s("splits.jsonl"), "--features",
                           s("features.jsonl"), "--out", s("model.ckpt"), "--log", s("train.log")},
                          kSmall));
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = cli({});
  CHECK(r.code == kExitUsage);
  r = cli({"frobnicate"});
  CHECK(r.code == kExitUsage);
  r = cli({"evaluate", "--store", "s", "--splits", "p", "--features", "f", "--out", "o"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("checkpoint") != std::string::npos);
  r = cli({"fuzz-validate", "--store", kFixtures + "/pipeline_report.json", "--ids", "1", "--ids-file", "x",
           "--out", "o"});
  CHECK(r.code == kExitUsage);
  r = cli({"split", "--store", kFixtures + "/pipeline_report.json", "--out", "o", "--set", "noequals"});
  CHECK(r.code == kExitUsage);
  r = cli({"split", "--store", kFixtures + "/pipeline_report.json", "--out", "o", "--backend", "warp"});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("validation errors exit 3") {
  const auto dir = scratch("validation");
  auto r = cli({"ingest", "--report", (dir / "missing.json").string(), "--out", (dir / "s").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("--report") != std::string::npos);
  std::ofstream(dir / "bad.json") << "[{\"level\": \"Warning\"}]";
  r = cli({"ingest", "--report", (dir / "bad.json").string(), "--out", (dir / "s").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("analyzer") != std::string::npos);
  r = cli({"split", "--store", (dir / "bad.json").string(), "--out", "o", "--set", "no.key=1"});
  CHECK(r.code == kExitValidation);
  CHECK_FALSE(fs::exists(dir / "s"));
}

TEST_CASE("help exits 0") {
  const auto r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("triage") != std::string::npos);
}

TEST_CASE("full pipeline") {
  const auto dir = scratch("pipeline");
  const auto s = [&](const char* f) { return (dir / f).string(); };
  const std::string report_before = slurp(kFixtures + "/pipeline_report.json");
  build_pipeline(dir);
  CHECK(slurp(s("train.log")).rfind("epoch=1 ", 0) == 0);
  const std::string manifest = slurp(s("manifest.tsv"));
  CHECK(manifest.find("\tsignal") == std::string::npos);
  CHECK(manifest.find("cyclomatic_complexity") != std::string::npos);

  auto r = cli({"evaluate", "--checkpoint", s("model.ckpt"), "--store", s("store.jsonl"), "--splits",
                s("splits.jsonl"), "--features", s("features.jsonl"), "--verdicts", s("verdicts.jsonl"), "--out",
                s("report.txt"), "--jobs", "2"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.rfind("config_digest=", 0) == 0);
  CHECK(slurp(s("report.txt")).find("fuzz_invocation_rate=") != std::string::npos);

  r = cli({"report", "--verdicts", s("verdicts.jsonl"), "--store", s("store.jsonl"), "--out", s("report2.txt")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(s("report2.txt")) == slurp(s("report.txt")));
  r = cli({"report", "--verdicts", s("verdicts.jsonl"), "--labels", kFixtures + "/pipeline_labels.jsonl", "--out",
           s("report3.txt")});
  CHECK(slurp(s("report3.txt")) == slurp(s("report.txt")));
  r = cli({"report", "--verdicts", s("verdicts.jsonl"), "--out", s("report4.txt")});
  CHECK(r.code == kExitUsage);

  r = cli({"triage", "--report", kFixtures + "/pipeline_report.json", "--checkpoint", s("model.ckpt"), "--metadata",
           kFixtures + "/pipeline_metadata.jsonl", "--out", s("triage.jsonl")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string verdicts = slurp(s("triage.jsonl"));
  CHECK(std::count(verdicts.begin(), verdicts.end(), '\n') == 20);

  r = cli({"importance", "--checkpoint", s("model.ckpt"), "--store", s("store.jsonl"), "--splits",
           s("splits.jsonl"), "--features", s("features.jsonl"), "--split", "train", "--set", "importance.repeats=1",
           "--out", s("importance.tsv")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string ranking = slurp(s("importance.tsv"));
  CHECK(std::count(ranking.begin(), ranking.end(), '\n') == 87);
  CHECK(ranking.rfind("1\t", 0) == 0);

  r = cli({"fuzz-validate", "--store", s("store.jsonl"), "--ids", "0", "--out", s("fuzz.jsonl")});
  CHECK(r.code == kExitUsage);
  CHECK(slurp(kFixtures + "/pipeline_report.json") == report_before);
}

TEST_CASE("simulated fuzz-validate writes replayable outcomes") {
  const auto dir = scratch("fuzz");
  const auto s = [&](const char* f) { return (dir / f).string(); };
  build_pipeline(dir);
  const std::string store = slurp(s("store.jsonl"));
  std::vector<std::string> ids;
  for (std::size_t pos = 0; (pos = store.find("\"id\":\"", pos)) != std::string::npos; pos += 6) {
    ids.push_back(store.substr(pos + 6, 16));
  }
  REQUIRE(ids.size() == 20);
  std::ofstream(dir / "ids.txt") << ids[0] << '\n' << ids[1] << '\n';
  auto r = cli({"fuzz-validate", "--store", s("store.jsonl"), "--ids-file", s("ids.txt"), "--backend", "simulated",
                "--out", s("fuzz.jsonl")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string outcomes = slurp(s("fuzz.jsonl"));
  CHECK(std::count(outcomes.begin(), outcomes.end(), '\n') == 2);

  r = cli({"evaluate", "--checkpoint", s("model.ckpt"), "--store", s("store.jsonl"), "--splits", s("splits.jsonl"),
           "--features", s("features.jsonl"), "--backend", "recorded", "--out", s("r.txt")});
  CHECK(r.code == kExitUsage);
  r = cli({"fuzz-validate", "--store", s("store.jsonl"), "--ids", "zz", "--backend", "simulated", "--out",
           s("f2.jsonl")});
  CHECK(r.code == kExitValidation);
}

TEST_CASE("digest mismatch names both digests") {
  const auto dir = scratch("digest");
  const auto s = [&](const char* f) { return (dir / f).string(); };
  build_pipeline(dir);
  std::string features = slurp(s("features.jsonl"));
  const auto pos = features.find("\"manifest_digest\":\"");
  REQUIRE(pos != std::string::npos);
  const std::string real = features.substr(pos + 19, 16);
  std::string fake = real;
  fake[0] = fake[0] == '0' ? '1' : '0';
  for (std::size_t p = 0; (p = features.find(real, p)) != std::string::npos; p += 16) features.replace(p, 16, fake);
  std::ofstream(dir / "features_bad.jsonl", std::ios::trunc) << features;
  const auto r = cli({"evaluate", "--checkpoint", s("model.ckpt"), "--store", s("store.jsonl"), "--splits",
                      s("splits.jsonl"), "--features", s("features_bad.jsonl"), "--out", s("r.txt")});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find(real) != std::string::npos);
  CHECK(r.err.find(fake) != std::string::npos);
}

TEST_CASE("config file and digest echo") {
  const auto dir = scratch("config");
  std::ofstream(dir / "run.conf") << "# run\nseed = 5\ntrain.patience = 2\n";
  const std::string store = kFixtures + "/pipeline_report.json";
  const auto a = cli({"split", "--store", store, "--out", (dir / "x").string(), "--config",
                      (dir / "run.conf").string()});
  const auto b = cli({"split", "--store", store, "--out", (dir / "x").string(), "--set", "seed=5", "--set",
                      "train.patience=2"});
  REQUIRE(a.out.rfind("config_digest=", 0) == 0);
  CHECK(a.out.substr(0, 31) == b.out.substr(0, 31));
  const auto c = cli({"split", "--store", store, "--out", (dir / "x").string(), "--config",
                      (dir / "run.conf").string(), "--seed", "6"});
  CHECK(c.out.substr(0, 31) != a.out.substr(0, 31));
}

TEST_CASE("binary is deterministic end to end") {
  const std::string bin = TRIAGE_BIN;
  std::string first;
  for (int round = 0; round < 2; ++round) {
    const auto dir = scratch("bin" + std::to_string(round));
    const std::string cmd = bin + " ingest --report " + kFixtures + "/pipeline_report.json --labels " + kFixtures +
                            "/pipeline_labels.jsonl --out " + (dir / "store.jsonl").string() + " > " +
                            (dir / "stdout.txt").string() + " 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const std::string produced = slurp(dir / "store.jsonl") + slurp(dir / "stdout.txt");
    if (round == 0) first = produced;
    else CHECK(produced == first);
  }
  CHECK(std::system((bin + " bogus > /dev/null 2>&1").c_str()) != 0);
}
