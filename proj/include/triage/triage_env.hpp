#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "triage/fuzz_backend.hpp"
#include "triage/warning_store.hpp"

namespace triage {

enum class TriageAction { ClassifyTP = 0, ClassifyFP = 1, Fuzz = 2 };

inline constexpr std::size_t kActionCount = 3;
inline constexpr std::array<TriageAction, kActionCount> kAllActions = {
    TriageAction::ClassifyTP, TriageAction::ClassifyFP, TriageAction::Fuzz};

std::string_view to_string(TriageAction action);

// One-hot fuzz slots appended to the feature vector, in this order.
enum class FuzzSlot { NotRun = 0, Crash, SanitizerViolation, Clean, Inconclusive, InfrastructureFailure };
inline constexpr std::size_t kFuzzSlots = 6;

FuzzSlot slot_of(OutcomeKind kind);

class TriageState {
 public:
  TriageState() = default;

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  std::size_t feature_count() const { return values_.size() - kFuzzSlots; }

  FuzzSlot fuzz_slot() const;
  bool fuzzed() const { return fuzz_slot() != FuzzSlot::NotRun; }
  // Fuzz is legal only before any outcome is recorded.
  bool fuzz_allowed() const { return !fuzzed(); }

  TriageState with_outcome(OutcomeKind kind) const;

  friend bool operator==(const TriageState&, const TriageState&) = default;

 private:
  friend TriageState env_reset(std::span<const double> features, std::size_t expected_length);
  std::vector<double> values_;
};

// [features || 1,0,0,0,0,0]. Throws LengthMismatch when the feature count is
// not `expected_length`.
TriageState env_reset(std::span<const double> features, std::size_t expected_length);

struct RewardSpec {
  double correct = 15.0;
  double incorrect = -15.0;
  double fuzz_cost = -5.0;
  double bonus_crash_tp = 10.0;
  double bonus_clean_fp = 8.0;
  double bonus_inconclusive = 3.0;
  double gamma = 1.0;
};

// Fuzz -> fuzz_cost. A classification earns correct/incorrect plus, only when
// correct, the bonus matching the prior fuzz evidence: crash-grade evidence
// with ClassifyTP, a clean run with ClassifyFP, or an inconclusive run.
// Throws IllegalAction for Fuzz when prior_fuzz is set.
double reward_of(TriageAction action, Label true_label, std::optional<OutcomeKind> prior_fuzz,
                 const RewardSpec& spec = {});

struct StepResult {
  // Set for the Fuzz action.
  std::optional<TriageState> next;
  std::optional<FuzzOutcome> outcome;
  // Set for classifications (terminal).
  std::optional<Label> prediction;
  double reward = 0.0;

  bool terminal() const { return prediction.has_value(); }
};

// Without a true label (deployment) classification rewards are 0. Backend
// exceptions become an InfrastructureFailure outcome.
StepResult env_step(const TriageState& state, TriageAction action, std::optional<Label> true_label,
                    const FuzzBackend& backend, const FuzzRequest& request, const RewardSpec& spec = {});

// G_t = sum_k gamma^(k-t) r_k.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

}  // namespace triage
