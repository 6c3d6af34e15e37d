#include "triage/triage_env.hpp"

#include <string>

#include "triage/error.hpp"

namespace triage {

std::string_view to_string(TriageAction action) {
  switch (action) {
    case TriageAction::ClassifyTP: return "classify_tp";
    case TriageAction::ClassifyFP: return "classify_fp";
    case TriageAction::Fuzz: return "fuzz";
  }
  return "classify_tp";
}

FuzzSlot slot_of(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Crash: return FuzzSlot::Crash;
    case OutcomeKind::SanitizerViolation: return FuzzSlot::SanitizerViolation;
    case OutcomeKind::Clean: return FuzzSlot::Clean;
    case OutcomeKind::Inconclusive: return FuzzSlot::Inconclusive;
    case OutcomeKind::InfrastructureFailure: return FuzzSlot::InfrastructureFailure;
  }
  return FuzzSlot::InfrastructureFailure;
}

FuzzSlot TriageState::fuzz_slot() const {
  const std::size_t base = feature_count();
  for (std::size_t k = 0; k < kFuzzSlots; ++k) {
    if (values_[base + k] == 1.0) return static_cast<FuzzSlot>(k);
  }
  return FuzzSlot::NotRun;
}

TriageState TriageState::with_outcome(OutcomeKind kind) const {
  TriageState next = *this;
  const std::size_t base = feature_count();
  for (std::size_t k = 0; k < kFuzzSlots; ++k) next.values_[base + k] = 0.0;
  next.values_[base + static_cast<std::size_t>(slot_of(kind))] = 1.0;
  return next;
}

TriageState env_reset(std::span<const double> features, std::size_t expected_length) {
  if (features.size() != expected_length) {
    throw LengthMismatch("state has " + std::to_string(features.size()) + " features, expected " +
                         std::to_string(expected_length));
  }
  TriageState s;
  s.values_.assign(features.begin(), features.end());
  s.values_.resize(features.size() + kFuzzSlots, 0.0);
  s.values_[features.size()] = 1.0;
  return s;
}

double reward_of(TriageAction action, Label true_label, std::optional<OutcomeKind> prior_fuzz,
                 const RewardSpec& spec) {
  if (action == TriageAction::Fuzz) {
    if (prior_fuzz) throw IllegalAction("fuzz requested after a fuzz outcome is already recorded");
    return spec.fuzz_cost;
  }
  const Label predicted = action == TriageAction::ClassifyTP ? Label::TruePositive : Label::FalsePositive;
  if (predicted != true_label) return spec.incorrect;
  double reward = spec.correct;
  if (!prior_fuzz) return reward;
  if (is_bug_evidence(*prior_fuzz) && predicted == Label::TruePositive) reward += spec.bonus_crash_tp;
  if (*prior_fuzz == OutcomeKind::Clean && predicted == Label::FalsePositive) reward += spec.bonus_clean_fp;
  if (*prior_fuzz == OutcomeKind::Inconclusive) reward += spec.bonus_inconclusive;
  return reward;
}

StepResult env_step(const TriageState& state, TriageAction action, std::optional<Label> true_label,
                    const FuzzBackend& backend, const FuzzRequest& request, const RewardSpec& spec) {
  StepResult result;
  if (action == TriageAction::Fuzz) {
    if (!state.fuzz_allowed()) throw IllegalAction("fuzz requested after a fuzz outcome is already recorded");
    FuzzOutcome outcome;
    try {
      outcome = backend.run(request);
    } catch (const std::exception& e) {
      outcome = {OutcomeKind::InfrastructureFailure, 0.0, e.what()};
    }
    result.next = state.with_outcome(outcome.kind);
    result.outcome = std::move(outcome);
    result.reward = spec.fuzz_cost;
    return result;
  }
  result.prediction = action == TriageAction::ClassifyTP ? Label::TruePositive : Label::FalsePositive;
  if (true_label) {
    std::optional<OutcomeKind> prior;
    switch (state.fuzz_slot()) {
      case FuzzSlot::NotRun: break;
      case FuzzSlot::Crash: prior = OutcomeKind::Crash; break;
      case FuzzSlot::SanitizerViolation: prior = OutcomeKind::SanitizerViolation; break;
      case FuzzSlot::Clean: prior = OutcomeKind::Clean; break;
      case FuzzSlot::Inconclusive: prior = OutcomeKind::Inconclusive; break;
      case FuzzSlot::InfrastructureFailure: prior = OutcomeKind::InfrastructureFailure; break;
    }
    result.reward = reward_of(action, *true_label, prior, spec);
  }
  return result;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

}  // namespace triage
