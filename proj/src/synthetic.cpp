#include "triage/synthetic.hpp"

#include <string>

#include "triage/hash.hpp"
#include "triage/random.hpp"

namespace triage::synthetic {

namespace {

FeatureManifest make_manifest(const std::vector<std::string>& names) {
  std::vector<FeatureEntry> entries;
  for (const auto& n : names) entries.push_back({n, FeatureFamily::AnalysisSpecific, FeatureKind::Count});
  return FeatureManifest(1, std::move(entries));
}

std::vector<std::string> names_with_noise(std::vector<std::string> head, std::size_t noise) {
  for (std::size_t i = 0; i < noise; ++i) head.push_back("noise_" + std::to_string(i + 1));
  return head;
}

void push(LabeledVectors& split, const FeatureManifest& manifest, WarningId id, std::vector<double> values,
          Label label) {
  split.vectors.push_back({id, std::move(values), manifest.digest()});
  split.labels.push_back(label);
}

LabeledVectors& pick(Task& task, std::size_t i, const Sizes& sizes) {
  if (i < sizes.train) return task.train;
  if (i < sizes.train + sizes.val) return task.val;
  return task.test;
}

}  // namespace

Task separable(std::uint64_t seed, Sizes sizes, std::size_t noise) {
  Task task{make_manifest(names_with_noise({"signal"}, noise)), {}, {}, {}, {}};
  Rng rng(combine_seed(seed, 0x5e9a));
  const std::size_t total = sizes.train + sizes.val + sizes.test;
  for (std::size_t i = 0; i < total; ++i) {
    const Label label = rng.uniform() < 0.5 ? Label::TruePositive : Label::FalsePositive;
    std::vector<double> v{label == Label::TruePositive ? 1.0 : 0.0};
    for (std::size_t k = 0; k < noise; ++k) v.push_back(rng.normal());
    push(pick(task, i, sizes), task.manifest, mix64(seed ^ (i + 1)), std::move(v), label);
  }
  return task;
}

Task fuzz_value(std::uint64_t seed, Sizes sizes, double ambiguous_fraction, std::size_t noise) {
  Task task{make_manifest(names_with_noise({"ambiguous", "signal"}, noise)), {}, {}, {}, {}};
  Rng rng(combine_seed(seed, 0xf022));
  const std::size_t total = sizes.train + sizes.val + sizes.test;
  for (std::size_t i = 0; i < total; ++i) {
    const bool ambiguous = rng.uniform() < ambiguous_fraction;
    const double p_tp = ambiguous ? 0.5 : 0.25;
    const Label label = rng.uniform() < p_tp ? Label::TruePositive : Label::FalsePositive;
    const double signal =
        ambiguous ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : (label == Label::TruePositive ? 1.0 : 0.0);
    std::vector<double> v{ambiguous ? 1.0 : 0.0, signal};
    for (std::size_t k = 0; k < noise; ++k) v.push_back(rng.normal());
    push(pick(task, i, sizes), task.manifest, mix64(seed ^ (i + 1)), std::move(v), label);
    if (i >= sizes.train + sizes.val) task.test_ambiguous.push_back(ambiguous);
  }
  return task;
}

SimOracleConfig fuzz_value_oracle(std::uint64_t seed) {
  SimOracleConfig cfg;
  cfg.p_crash_given_tp = 0.9;
  cfg.p_crash_given_fp = 0.02;
  cfg.p_inconclusive = 0.95;
  cfg.seed = seed;
  return cfg;
}

SimOracleConfig uninformative_oracle(std::uint64_t seed) {
  SimOracleConfig cfg;
  cfg.p_crash_given_tp = 0.2;
  cfg.p_crash_given_fp = 0.2;
  cfg.p_inconclusive = 0.5;
  cfg.seed = seed;
  return cfg;
}

std::vector<WarningRecord> labeled_records(std::size_t n, std::size_t positives, std::uint64_t seed) {
  Rng rng(combine_seed(seed, 0x4ec0));
  std::vector<Label> labels(n, Label::FalsePositive);
  for (std::size_t i = 0; i < positives && i < n; ++i) labels[i] = Label::TruePositive;
  rng.shuffle(labels);
  std::vector<WarningRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    WarningRecord r;
    r.analyzer = "UnsafeDataflow";
    r.description = "synthetic warning " + std::to_string(i);
    r.file = "crate-" + std::to_string(i % 97) + "/src/lib.rs";
    r.span = {static_cast<int>(i + 1), 1, static_cast<int>(i + 1), 10};
    r.code_snippet = "fn f() {}";
    r.id = compute_warning_id(r.file, r.span, r.analyzer, r.description);
    r.label = labels[i];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace triage::synthetic
