#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/checkpoint.hpp"
#include "triage/fuzz_backend.hpp"
#include "triage/policy.hpp"

namespace triage {

// Per-warning verdict; also the record persisted in the verdicts file.
struct Verdict {
  WarningId id = 0;
  Label predicted = Label::FalsePositive;
  // Post-mask probability of ClassifyTP at the terminal decision.
  double score = 0.0;
  bool fuzz_used = false;
  std::optional<OutcomeKind> fuzz_kind;
};

// A value or the reason it is undefined; never NaN.
struct Metric {
  std::optional<double> value;
  std::string reason;

  double value_or(double fallback) const { return value.value_or(fallback); }
};

struct EvalReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t n = 0;
  double accuracy = 0.0;
  Metric precision;
  Metric recall;
  Metric f1;
  double mcc = 0.0;
  Metric auc_roc;
  Metric auc_pr;
  double fuzz_invocation_rate = 0.0;
};

// Throws EmptyInput for no predictions, ValidationError for mismatched
// lengths or scores outside [0, 1].
EvalReport compute_metrics(std::span<const Verdict> verdicts, std::span<const Label> labels);

// Mann-Whitney rank statistic with average ranks for ties.
Metric auc_roc(std::span<const double> scores, std::span<const Label> labels);
// Step-wise average precision; tied scores form one threshold.
Metric average_precision(std::span<const double> scores, std::span<const Label> labels);

// Flat "key=value" document in a fixed key order; absent metrics print
// "absent (<reason>)".
std::string format_report(const EvalReport& report);

// One {"warning_id","predicted","score","fuzz_used","fuzz_kind"} per line.
std::string serialize_verdicts(std::span<const Verdict> verdicts);
std::vector<Verdict> parse_verdicts(std::string_view content);

// A warning ready for the policy: features are already normalized.
struct Example {
  WarningId id = 0;
  std::vector<double> features;
  std::optional<Label> label;
  const WarningRecord* record = nullptr;
};

struct EpisodeOptions {
  // Null backend or mask_fuzz forbid the Fuzz action.
  const FuzzBackend* backend = nullptr;
  bool mask_fuzz = false;
  double fuzz_budget = kMinFuzzBudget;
  std::uint64_t draw = 0;
  RewardSpec reward;
};

// One greedy episode: classify, or fuzz once and then classify.
Verdict run_greedy_episode(const PolicyParams& params, const Example& example, const EpisodeOptions& options);

// Greedy episodes for every example, `jobs` worker threads, results in input order.
std::vector<Verdict> evaluate_policy(const PolicyParams& params, std::span<const Example> examples,
                                     const EpisodeOptions& options, unsigned jobs = 1);

// Raw (unnormalized) feature vectors for a split, with labels.
struct LabeledVectors {
  std::vector<FeatureVector> vectors;
  std::vector<Label> labels;
  // Optional; parallel to vectors when present (needed by the external backend).
  std::vector<const WarningRecord*> records;
};

// Normalizes under the checkpoint's stats; throws DigestMismatch when any
// vector was built under a different manifest.
std::vector<Example> prepare_examples(const PolicyCheckpoint& checkpoint, const LabeledVectors& split);

struct Evaluation {
  EvalReport report;
  std::vector<Verdict> verdicts;
};

Evaluation evaluate_checkpoint(const PolicyCheckpoint& checkpoint, const LabeledVectors& split,
                               const FuzzBackend* backend, unsigned jobs = 1);

enum class ImportanceMetric { F1, Accuracy, MCC };

struct FeatureImportance {
  std::size_t index = 0;
  std::string name;
  double mean_delta = 0.0;
};

// Shuffles one feature column at a time (seeded), re-evaluates with Fuzz
// masked and records the metric drop; sorted by descending mean drop, ties by
// feature index.
std::vector<FeatureImportance> permutation_importance(const PolicyCheckpoint& checkpoint,
                                                      const LabeledVectors& split,
                                                      const FeatureManifest& manifest,
                                                      ImportanceMetric metric = ImportanceMetric::F1,
                                                      int repeats = 5, std::uint64_t seed = 0);

}  // namespace triage
