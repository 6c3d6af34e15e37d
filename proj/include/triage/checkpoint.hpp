#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "triage/featurizer.hpp"
#include "triage/policy.hpp"
#include "triage/triage_env.hpp"

namespace triage {

struct TrainConfig {
  int epochs_max = 200;
  int minibatch = 64;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int ppo_epochs = 4;
  double gamma = 1.0;
  int patience = 10;
  // Episodes per epoch; 0 means one per training warning.
  int rollout_episodes = 0;
  double dropout = kDefaultDropout;
  int hidden1 = static_cast<int>(kHidden1);
  int hidden2 = static_cast<int>(kHidden2);
  double fuzz_budget = 30.0;
  std::uint64_t seed = 0;

  // Throws ValidationError when a field is out of range.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_return = 0.0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
  double fuzz_rate = 0.0;
  double total_loss = 0.0;
};

// "epoch=.. mean_return=.. val_accuracy=.. val_f1=.. fuzz_rate=.." (training log line).
std::string format_epoch_log(const EpochLog& log);

struct TrainingHistory {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochLog> epochs;
};

struct PolicyCheckpoint {
  PolicyParams params;
  NormalizerStats normalizer;
  std::string manifest_digest;
  TrainConfig config;
  RewardSpec reward;
  TrainingHistory history;
};

inline constexpr int kCheckpointFormatVersion = 1;

// Line-oriented text container. Every real is written in shortest
// round-trip form, so save -> load is lossless and byte-stable.
std::string serialize_checkpoint(const PolicyCheckpoint& checkpoint);
PolicyCheckpoint parse_checkpoint(std::string_view content);

// Throws DigestMismatch unless the checkpoint was trained on `digest`.
void require_digest(const PolicyCheckpoint& checkpoint, std::string_view digest);

std::string format_real(double x);

}  // namespace triage
