#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/harness.hpp"
#include "triage/warning_store.hpp"

namespace triage {

enum class OutcomeKind { Crash, SanitizerViolation, Clean, Inconclusive, InfrastructureFailure };

std::string_view to_string(OutcomeKind kind);
std::optional<OutcomeKind> parse_outcome_kind(std::string_view s);

// Crash-grade evidence of a real bug.
inline bool is_bug_evidence(OutcomeKind kind) {
  return kind == OutcomeKind::Crash || kind == OutcomeKind::SanitizerViolation;
}

struct FuzzOutcome {
  OutcomeKind kind = OutcomeKind::Inconclusive;
  double elapsed = 0.0;
  std::string detail;
};

inline constexpr double kMinFuzzBudget = 30.0;
inline constexpr double kMaxFuzzBudget = 60.0;
inline constexpr double kFuzzGrace = 5.0;

struct FuzzRequest {
  WarningId warning_id = 0;
  // Needed by the external backend to render a harness.
  const WarningRecord* record = nullptr;
  // Only the simulated backend may look at this.
  std::optional<Label> true_label;
  double budget_seconds = kMinFuzzBudget;
  // Index into the simulated backend's per-warning stream.
  std::uint64_t draw = 0;
};

class FuzzBackend {
 public:
  virtual ~FuzzBackend() = default;
  // Recorded may throw MissingRecording; the environment maps that to
  // InfrastructureFailure. External never throws for process failures.
  virtual FuzzOutcome run(const FuzzRequest& request) const = 0;
  virtual std::string name() const = 0;
};

struct SimOracleConfig {
  double p_crash_given_tp = 0.6;
  double p_crash_given_fp = 0.02;
  double p_inconclusive = 0.25;
  std::uint64_t seed = 0;

  // Throws ValidationError unless all probabilities lie in [0, 1] and
  // p_crash_given_fp <= p_crash_given_tp.
  void validate() const;
};

// Pure: Crash with p_crash_given_<label>, else Inconclusive with
// p_inconclusive, else Clean; the uniform draws come from the stream seeded by
// (cfg.seed, warning id), advanced `draw` times.
FuzzOutcome simulate_outcome(const SimOracleConfig& cfg, WarningId id, Label label, std::uint64_t draw = 0);

class SimulatedBackend final : public FuzzBackend {
 public:
  explicit SimulatedBackend(SimOracleConfig cfg);
  FuzzOutcome run(const FuzzRequest& request) const override;
  std::string name() const override { return "simulated"; }
  const SimOracleConfig& config() const { return cfg_; }

 private:
  SimOracleConfig cfg_;
};

struct RecordedOutcome {
  WarningId id = 0;
  FuzzOutcome outcome;
};

// One {"warning_id","kind","elapsed","detail"} object per line.
std::vector<RecordedOutcome> parse_recorded_outcomes(std::string_view content);
std::string serialize_recorded_outcomes(std::span<const RecordedOutcome> outcomes);

class RecordedBackend final : public FuzzBackend {
 public:
  explicit RecordedBackend(std::span<const RecordedOutcome> outcomes);
  FuzzOutcome run(const FuzzRequest& request) const override;
  std::string name() const override { return "recorded"; }

 private:
  std::map<WarningId, FuzzOutcome> outcomes_;
};

struct ExternalConfig {
  // Invoked as `<command> <harness-path> --budget <seconds>` through /bin/sh.
  std::string command;
  std::string work_dir = "triage-harnesses";
  double min_budget = kMinFuzzBudget;
  double max_budget = kMaxFuzzBudget;
  double grace = kFuzzGrace;
  // Fuzz processes allowed to run at once; further callers wait.
  int max_concurrent = 1;
  std::string sanitizer_marker = R"(==\d*==\s*ERROR: (Address|Memory|Thread|Leak|UndefinedBehavior)Sanitizer|runtime error:|WARNING: ThreadSanitizer)";
  std::string crash_marker = R"(panicked at|deadly signal|SIGSEGV|SIGABRT|SIGBUS|Segmentation fault|==ERROR: libFuzzer)";
  std::string build_failure_marker = R"(error\[E\d+\]|could not compile|error: could not find|linker .* not found|TRIAGE-BUILD-FAILURE)";
};

// TRIAGE_FUZZ_CMD, when set and non-empty, replaces config.command.
ExternalConfig apply_environment(ExternalConfig config);

double clamp_budget(double seconds, double lo = kMinFuzzBudget, double hi = kMaxFuzzBudget);

// Maps a finished process to an outcome: a sanitizer marker wins, then a
// build-failure marker, then exit 0 is Clean, then a crash marker with a
// nonzero status is Crash, anything else Inconclusive.
OutcomeKind classify_process_result(int exit_status, bool signaled, std::string_view output,
                                    const ExternalConfig& config, std::string* detail = nullptr);

class ExternalBackend final : public FuzzBackend {
 public:
  ExternalBackend(ExternalConfig config, TemplateSet templates);
  FuzzOutcome run(const FuzzRequest& request) const override;
  std::string name() const override { return "external"; }
  const ExternalConfig& config() const { return config_; }

 private:
  struct Pool;

  ExternalConfig config_;
  TemplateSet templates_;
  std::shared_ptr<Pool> pool_;
};

}  // namespace triage
