#include <cmath>
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "triage/error.hpp"
#include "triage/fuzz_backend.hpp"
#include "triage/hash.hpp"

using namespace triage;
namespace fs = std::filesystem;

namespace {

WarningRecord panic_warning() {
  WarningRecord r;
  r.analyzer = "UnsafeDataflow";
  r.description = "panic safety in `unsafe_retain`";
  r.file = "demo-0.1.0/src/lib.rs";
  r.span = {5, 1, 9, 2};
  r.code_snippet = "pub fn unsafe_retain<F: FnMut(&u8) -> bool>(v: &mut Vec<u8>, f: F) {}";
  r.id = compute_warning_id(r.file, r.span, r.analyzer, r.description);
  return r;
}

// Writes an executable shell script and returns its path.
std::string script(const fs::path& dir, const std::string& name, const std::string& body) {
  fs::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << "#!/bin/sh\n" << body << "\n";
  fs::permissions(path, fs::perms::owner_all);
  return path.string();
}

ExternalConfig fast_config(const fs::path& dir, std::string command) {
  ExternalConfig c;
  c.command = std::move(command);
  c.work_dir = (dir / "harnesses").string();
  c.min_budget = 1;
  c.max_budget = 2;
  c.grace = 0.5;
  return c;
}

FuzzOutcome run_external(const ExternalConfig& cfg, const WarningRecord& w, double budget = 1) {
  ExternalBackend backend(cfg, TemplateSet::builtin());
  return backend.run({w.id, &w, std::nullopt, budget, 0});
}

}  // namespace

TEST_CASE("simulated probability-one branches") {
  SimOracleConfig cfg{1.0, 0.0, 0.0, 3};
  CHECK(simulate_outcome(cfg, 42, Label::TruePositive).kind == OutcomeKind::Crash);
  CHECK(simulate_outcome(cfg, 42, Label::FalsePositive).kind == OutcomeKind::Clean);
  cfg = {1.0, 0.0, 1.0, 3};
  CHECK(simulate_outcome(cfg, 42, Label::FalsePositive).kind == OutcomeKind::Inconclusive);
}

TEST_CASE("simulated outcomes are a pure function of seed, id, label and draw") {
  SimOracleConfig cfg{0.6, 0.02, 0.25, 11};
  for (WarningId id = 0; id < 200; ++id) {
    for (std::uint64_t draw = 0; draw < 3; ++draw) {
      CHECK(simulate_outcome(cfg, id, Label::TruePositive, draw).kind ==
            simulate_outcome(cfg, id, Label::TruePositive, draw).kind);
    }
  }
  SimulatedBackend backend(cfg);
  CHECK(backend.run({5, nullptr, Label::TruePositive, 30, 1}).kind ==
        simulate_outcome(cfg, 5, Label::TruePositive, 1).kind);
  CHECK(backend.run({5, nullptr, std::nullopt, 30, 0}).kind == OutcomeKind::InfrastructureFailure);
}

TEST_CASE("simulated crash fraction converges") {
  SimOracleConfig cfg{0.8, 0.05, 0.25, 0};
  int crashes = 0;
  for (WarningId id = 0; id < 10000; ++id) {
    crashes += simulate_outcome(cfg, mix64(id), Label::TruePositive).kind == OutcomeKind::Crash ? 1 : 0;
  }
  CHECK(std::abs(crashes / 10000.0 - 0.8) <= 0.02);
}

TEST_CASE("simulated config validation") {
  CHECK_THROWS_AS((SimOracleConfig{1.2, 0.0, 0.0, 0}.validate()), ValidationError);
  CHECK_THROWS_AS((SimOracleConfig{0.1, 0.2, 0.0, 0}.validate()), ValidationError);
  CHECK_NOTHROW((SimOracleConfig{}.validate()));
}

TEST_CASE("recorded replay") {
  std::vector<RecordedOutcome> rec{{7, {OutcomeKind::Clean, 12.5, "ok"}},
                                   {9, {OutcomeKind::SanitizerViolation, 3.0, "heap-use-after-free"}}};
  const auto parsed = parse_recorded_outcomes(serialize_recorded_outcomes(rec));
  REQUIRE(parsed.size() == 2);
  RecordedBackend backend(parsed);
  const auto o = backend.run({7, nullptr, std::nullopt, 30, 0});
  CHECK(o.kind == OutcomeKind::Clean);
  CHECK(o.elapsed == 12.5);
  CHECK(o.detail == "ok");
  CHECK(backend.run({9, nullptr, std::nullopt, 30, 0}).detail == "heap-use-after-free");
  try {
    backend.run({8, nullptr, std::nullopt, 30, 0});
    FAIL("expected MissingRecording");
  } catch (const MissingRecording& e) {
    CHECK(e.id() == to_hex(8));
  }
  CHECK_THROWS_AS(parse_recorded_outcomes(R"({"warning_id":"0000000000000001","kind":"boom"})"), SchemaError);
}

TEST_CASE("budget clamp") {
  CHECK(clamp_budget(10) == 30);
  CHECK(clamp_budget(45) == 45);
  CHECK(clamp_budget(600) == 60);
  CHECK(clamp_budget(NAN) == 30);
}

TEST_CASE("process result classification") {
  ExternalConfig c;
  std::string detail;
  CHECK(classify_process_result(0, false, "done", c, &detail) == OutcomeKind::Clean);
  CHECK(classify_process_result(1, false, "==123==ERROR: AddressSanitizer: heap-use-after-free", c) ==
        OutcomeKind::SanitizerViolation);
  CHECK(classify_process_result(0, false, "runtime error: index out of bounds", c) ==
        OutcomeKind::SanitizerViolation);
  CHECK(classify_process_result(77, false, "thread 'main' panicked at 'boom'", c) == OutcomeKind::Crash);
  CHECK(classify_process_result(6, true, "==1== ERROR: libFuzzer: deadly signal", c) == OutcomeKind::Crash);
  CHECK(classify_process_result(101, false, "error[E0425]: cannot find value", c) ==
        OutcomeKind::InfrastructureFailure);
  CHECK(classify_process_result(127, false, "sh: cargo: not found", c) == OutcomeKind::InfrastructureFailure);
  CHECK(classify_process_result(1, false, "nothing useful", c, &detail) == OutcomeKind::Inconclusive);
  CHECK_FALSE(detail.empty());
}

TEST_CASE("external backend runs the command on a rendered harness") {
  const auto dir = fs::temp_directory_path() / "triage_ext_test";
  fs::remove_all(dir);
  const auto w = panic_warning();

  const auto clean = script(dir, "clean.sh", "grep -q unsafe_retain \"$1\" || exit 3\n[ \"$2\" = --budget ] || exit 4\necho \"budget=$3\"\nexit 0");
  auto o = run_external(fast_config(dir, clean), w);
  CHECK(o.kind == OutcomeKind::Clean);
  CHECK(fs::exists(dir / "harnesses" / ("fuzz_" + to_hex(w.id) + ".rs")));

  const auto crash = script(dir, "crash.sh", "echo \"thread 'main' panicked at 'harness: injected panic'\" >&2\nexit 77");
  CHECK(run_external(fast_config(dir, crash), w).kind == OutcomeKind::Crash);

  const auto asan = script(dir, "asan.sh", "echo '==42==ERROR: AddressSanitizer: heap-use-after-free'\nexit 1");
  o = run_external(fast_config(dir, asan), w);
  CHECK(o.kind == OutcomeKind::SanitizerViolation);
  CHECK(o.detail.find("AddressSanitizer") != std::string::npos);

  const auto build = script(dir, "build.sh", "echo 'error: could not compile `demo`'\nexit 101");
  CHECK(run_external(fast_config(dir, build), w).kind == OutcomeKind::InfrastructureFailure);

  CHECK(run_external(fast_config(dir, (dir / "missing-binary").string()), w).kind ==
        OutcomeKind::InfrastructureFailure);
  fs::remove_all(dir);
}

TEST_CASE("external backend kills runs past budget plus grace") {
  const auto dir = fs::temp_directory_path() / "triage_ext_timeout";
  fs::remove_all(dir);
  const auto slow = script(dir, "slow.sh", "sleep 30");
  const auto cfg = fast_config(dir, slow);
  const auto start = std::chrono::steady_clock::now();
  const auto o = run_external(cfg, panic_warning(), 100);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(o.kind == OutcomeKind::Inconclusive);
  CHECK(o.detail == "timeout");
  CHECK(wall <= cfg.max_budget + cfg.grace + 1.0);
  CHECK(o.elapsed <= cfg.max_budget + cfg.grace + 0.5);
  fs::remove_all(dir);
}

TEST_CASE("external setup failures never throw") {
  const auto dir = fs::temp_directory_path() / "triage_ext_setup";
  ExternalConfig cfg = fast_config(dir, "");
  const auto w = panic_warning();
  CHECK(run_external(cfg, w).kind == OutcomeKind::InfrastructureFailure);
  cfg.command = "true";
  ExternalBackend backend(cfg, TemplateSet::builtin());
  CHECK(backend.run({w.id, nullptr, std::nullopt, 1, 0}).kind == OutcomeKind::InfrastructureFailure);
  WarningRecord unknown = w;
  unknown.analyzer = "Clippy";
  CHECK(run_external(cfg, unknown).kind == OutcomeKind::InfrastructureFailure);
  fs::remove_all(dir);
}

TEST_CASE("TRIAGE_FUZZ_CMD overrides the configured command") {
  ExternalConfig c;
  c.command = "configured";
  setenv("TRIAGE_FUZZ_CMD", "from-env", 1);
  CHECK(apply_environment(c).command == "from-env");
  setenv("TRIAGE_FUZZ_CMD", "", 1);
  CHECK(apply_environment(c).command == "configured");
  unsetenv("TRIAGE_FUZZ_CMD");
  CHECK(apply_environment(c).command == "configured");
}
