#pragma once

#include <cstdint>
#include <vector>

#include "triage/evaluator.hpp"
#include "triage/featurizer.hpp"
#include "triage/fuzz_backend.hpp"

namespace triage::synthetic {

struct Task {
  FeatureManifest manifest;
  LabeledVectors train;
  LabeledVectors val;
  LabeledVectors test;
  // Parallel to test: true for the ambiguous subclass (fuzz-value task only).
  std::vector<bool> test_ambiguous;
};

struct Sizes {
  std::size_t train = 600;
  std::size_t val = 150;
  std::size_t test = 150;
};

// Column "signal" equals the label (1 = TP); `noise` further columns are
// standard normal. Positive fraction 0.5.
Task separable(std::uint64_t seed, Sizes sizes = {}, std::size_t noise = 7);

// Two subclasses marked by the "ambiguous" column. Clear warnings carry the
// label in "signal" (a quarter of them positive); ambiguous warnings are half
// positive and their "signal" is an independent coin flip.
Task fuzz_value(std::uint64_t seed, Sizes sizes = {1000, 200, 400}, double ambiguous_fraction = 0.4,
                std::size_t noise = 4);

// Fidelity used with fuzz_value: crash 0.9 | TP, 0.02 | FP, inconclusive 0.95.
SimOracleConfig fuzz_value_oracle(std::uint64_t seed);

// Outcome distribution identical for both labels, so a fuzz run carries no
// information about the label.
SimOracleConfig uninformative_oracle(std::uint64_t seed);

// `n` labeled report records with `positives` true positives and distinct ids.
std::vector<WarningRecord> labeled_records(std::size_t n, std::size_t positives, std::uint64_t seed);

}  // namespace triage::synthetic
