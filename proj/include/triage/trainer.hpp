#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "triage/checkpoint.hpp"
#include "triage/evaluator.hpp"

namespace triage {

struct Step {
  std::vector<double> state;
  TriageAction action = TriageAction::ClassifyTP;
  double behavior_logp = 0.0;
  double reward = 0.0;
  double value = 0.0;
  std::size_t episode = 0;
  bool terminal = false;
  // Fuzz was not available at this step; the policy was renormalized over TP/FP.
  bool fuzz_masked = false;
  double ret = 0.0;
  double advantage = 0.0;
};

struct TrajectoryBatch {
  std::vector<Step> steps;
  std::size_t episodes = 0;
  std::size_t fuzz_actions = 0;
  double mean_return = 0.0;

  // Rescales advantages to mean 0, sd 1 (population sd; left centred only when sd is 0).
  void normalize_advantages();
};

struct RolloutOptions {
  const FuzzBackend* backend = nullptr;
  RewardSpec reward;
  double fuzz_budget = kMinFuzzBudget;
  std::uint64_t draw = 0;
  // 0 runs one episode per example in a shuffled order; otherwise examples are
  // drawn with replacement.
  std::size_t episodes = 0;
};

// Sampled episodes under the current policy (eval-mode forward). Returns and
// raw advantages are filled in; advantages are not yet normalized.
TrajectoryBatch collect_rollouts(const PolicyParams& params, std::span<const Example> examples,
                                 const RolloutOptions& options, Rng& rng);

struct LossReport {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  std::size_t minibatches = 0;
};

// total = -surrogate + c_v * value_mse - c_e * entropy, averaged over `indices`.
// Dropout masks come from `dropout_seed` when `training`, so repeated calls
// see the same network. Gradients are written to `grad` when non-null.
LossReport ppo_loss(const PolicyParams& params, const TrajectoryBatch& batch, std::span<const std::size_t> indices,
                    const TrainConfig& config, bool training, std::uint64_t dropout_seed, PolicyParams* grad);

// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(PolicyParams& params, const PolicyParams& grad, double learning_rate);
};

// config.ppo_epochs passes over shuffled minibatches. Throws NonFiniteLoss
// naming the minibatch; params are left untouched in that case.
LossReport ppo_update(PolicyParams& params, const TrajectoryBatch& batch, const TrainConfig& config,
                      AdamState& adam, Rng& rng);

using EpochCallback = std::function<void(const EpochLog&)>;

// Fits the normalizer on `train_split`, alternates rollouts and updates, and
// keeps the parameters with the best validation F1. Throws EmptySplit for an
// empty train or validation split, DigestMismatch when a vector was built
// under another manifest.
PolicyCheckpoint train(const LabeledVectors& train_split, const LabeledVectors& val_split,
                       const FeatureManifest& manifest, const TrainConfig& config, const RewardSpec& reward,
                       const FuzzBackend* backend, const EpochCallback& on_epoch = {});

}  // namespace triage
