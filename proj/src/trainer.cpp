#include "triage/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "triage/error.hpp"
#include "triage/hash.hpp"

namespace triage {

void TrajectoryBatch::normalize_advantages() {
  if (steps.empty()) return;
  double mean = 0.0;
  for (const auto& s : steps) mean += s.advantage;
  mean /= static_cast<double>(steps.size());
  double var = 0.0;
  for (const auto& s : steps) var += (s.advantage - mean) * (s.advantage - mean);
  const double sd = std::sqrt(var / static_cast<double>(steps.size()));
  for (auto& s : steps) {
    s.advantage -= mean;
    if (sd > 1e-12) s.advantage /= sd;
  }
}

TrajectoryBatch collect_rollouts(const PolicyParams& params, std::span<const Example> examples,
                                 const RolloutOptions& options, Rng& rng) {
  std::vector<std::size_t> order;
  if (options.episodes == 0) {
    order.resize(examples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  } else {
    order.reserve(options.episodes);
    for (std::size_t i = 0; i < options.episodes; ++i) order.push_back(rng.below(examples.size()));
  }

  TrajectoryBatch batch;
  double return_sum = 0.0;
  for (std::size_t idx : order) {
    const Example& ex = examples[idx];
    if (!ex.label) throw UnlabeledRecordError(to_hex(ex.id));
    TriageState state = env_reset(ex.features, ex.features.size());
    const std::size_t first = batch.steps.size();
    std::vector<double> rewards;
    for (;;) {
      const bool mask = options.backend == nullptr || !state.fuzz_allowed();
      const ActionDistribution dist = policy_forward(params, state.values(), false, nullptr);
      const auto probs = masked_probs(dist.probs, mask);
      const auto [action, signals] = select_action(dist, SelectMode::Sample, mask, &rng);
      (void)signals;
      Step step;
      step.state.assign(state.values().begin(), state.values().end());
      step.action = action;
      step.behavior_logp = std::log(probs[static_cast<std::size_t>(action)]);
      step.value = dist.value;
      step.episode = batch.episodes;
      step.fuzz_masked = mask;
      if (action == TriageAction::Fuzz) {
        FuzzRequest request{ex.id, ex.record, ex.label, options.fuzz_budget, options.draw};
        StepResult r = env_step(state, action, ex.label, *options.backend, request, options.reward);
        step.reward = r.reward;
        rewards.push_back(r.reward);
        batch.steps.push_back(std::move(step));
        ++batch.fuzz_actions;
        state = *r.next;
        continue;
      }
      FuzzRequest request{ex.id, ex.record, ex.label, options.fuzz_budget, options.draw};
      static const SimulatedBackend unused_backend{SimOracleConfig{}};
      const FuzzBackend& backend = options.backend ? *options.backend : unused_backend;
      StepResult r = env_step(state, action, ex.label, backend, request, options.reward);
      step.reward = r.reward;
      step.terminal = true;
      rewards.push_back(r.reward);
      batch.steps.push_back(std::move(step));
      break;
    }
    const auto returns = discounted_returns(rewards, options.reward.gamma);
    for (std::size_t k = 0; k < returns.size(); ++k) {
      Step& s = batch.steps[first + k];
      s.ret = returns[k];
      s.advantage = s.ret - s.value;
    }
    return_sum += returns.front();
    ++batch.episodes;
  }
  batch.mean_return = batch.episodes ? return_sum / static_cast<double>(batch.episodes) : 0.0;
  return batch;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

LossReport ppo_loss(const PolicyParams& params, const TrajectoryBatch& batch, std::span<const std::size_t> indices,
                    const TrainConfig& config, bool training, std::uint64_t dropout_seed, PolicyParams* grad) {
  const auto rows = static_cast<Eigen::Index>(indices.size());
  const auto cols = static_cast<Eigen::Index>(params.dims.input);
  Matrix input(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& s = batch.steps[indices[static_cast<std::size_t>(r)]].state;
    if (static_cast<Eigen::Index>(s.size()) != cols) {
      throw DimensionMismatch("state length " + std::to_string(s.size()) + " does not match network input " +
                              std::to_string(cols));
    }
    for (Eigen::Index c = 0; c < cols; ++c) input(r, c) = s[static_cast<std::size_t>(c)];
  }
  Rng rng(dropout_seed);
  ForwardCache cache;
  forward_batch(params, input, training, &rng, cache);

  const double inv = 1.0 / static_cast<double>(rows);
  Matrix dlogits = Matrix::Zero(rows, static_cast<Eigen::Index>(kActionCount));
  Vector dvalue = Vector::Zero(rows);
  LossReport report;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Step& s = batch.steps[indices[static_cast<std::size_t>(r)]];
    const std::size_t allowed = s.fuzz_masked ? 2 : 3;
    double m = -INFINITY;
    for (std::size_t j = 0; j < allowed; ++j) m = std::max(m, cache.logits(r, static_cast<Eigen::Index>(j)));
    double z = 0.0;
    for (std::size_t j = 0; j < allowed; ++j) z += std::exp(cache.logits(r, static_cast<Eigen::Index>(j)) - m);
    std::array<double, kActionCount> logp{};
    std::array<double, kActionCount> p{};
    for (std::size_t j = 0; j < allowed; ++j) {
      logp[j] = cache.logits(r, static_cast<Eigen::Index>(j)) - m - std::log(z);
      p[j] = std::exp(logp[j]);
    }
    double entropy = 0.0;
    for (std::size_t j = 0; j < allowed; ++j) entropy -= p[j] * logp[j];

    const auto a = static_cast<std::size_t>(s.action);
    const double ratio = std::exp(logp[a] - s.behavior_logp);
    const double surrogate = clipped_surrogate(ratio, s.advantage, config.clip_epsilon);
    // The min picks the unclipped branch (or both agree): gradient flows through ratio.
    const bool unclipped = ratio * s.advantage <= surrogate;
    const double dsurr_dlogp = unclipped ? ratio * s.advantage : 0.0;
    const double v = cache.value(r);
    const double verr = v - s.ret;

    report.surrogate += surrogate * inv;
    report.value_loss += verr * verr * inv;
    report.entropy += entropy * inv;

    for (std::size_t j = 0; j < allowed; ++j) {
      const double dlogp = (j == a ? 1.0 : 0.0) - p[j];
      const double dentropy = -p[j] * (logp[j] + entropy);
      dlogits(r, static_cast<Eigen::Index>(j)) = inv * (-dsurr_dlogp * dlogp - config.entropy_coef * dentropy);
    }
    dvalue(r) = inv * config.value_coef * 2.0 * verr;
  }
  report.total = -report.surrogate + config.value_coef * report.value_loss - config.entropy_coef * report.entropy;
  if (grad) *grad = backward_batch(params, cache, dlogits, dvalue);
  return report;
}

void AdamState::step(PolicyParams& params, const PolicyParams& grad, double learning_rate) {
  std::vector<double> theta = params.flat();
  const std::vector<double> g = grad.flat();
  if (m.empty()) {
    m.assign(theta.size(), 0.0);
    v.assign(theta.size(), 0.0);
  }
  if (m.size() != theta.size() || g.size() != theta.size()) throw DimensionMismatch("optimizer state size");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    theta[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
  params.assign_flat(theta);
}

LossReport ppo_update(PolicyParams& params, const TrajectoryBatch& batch, const TrainConfig& config,
                      AdamState& adam, Rng& rng) {
  LossReport total;
  if (batch.steps.empty()) return total;
  PolicyParams working = params;
  AdamState opt = adam;
  std::vector<std::size_t> order(batch.steps.size());
  std::iota(order.begin(), order.end(), 0);
  const auto mb = static_cast<std::size_t>(config.minibatch);
  std::size_t index = 0;
  for (int pass = 0; pass < config.ppo_epochs; ++pass) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += mb, ++index) {
      const std::size_t end = std::min(order.size(), start + mb);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      PolicyParams grad;
      const LossReport r = ppo_loss(working, batch, idx, config, working.dropout > 0.0, rng.next(), &grad);
      if (!std::isfinite(r.total)) throw NonFiniteLoss(index, "total loss is not finite");
      if (!grad.all_finite()) throw NonFiniteLoss(index, "gradient is not finite");
      opt.step(working, grad, config.learning_rate);
      if (!working.all_finite()) throw NonFiniteLoss(index, "parameters became non-finite");
      total.surrogate += r.surrogate;
      total.value_loss += r.value_loss;
      total.entropy += r.entropy;
      total.total += r.total;
      ++total.minibatches;
    }
  }
  const double n = static_cast<double>(total.minibatches);
  total.surrogate /= n;
  total.value_loss /= n;
  total.entropy /= n;
  total.total /= n;
  params = std::move(working);
  adam = std::move(opt);
  return total;
}

namespace {

void check_split(const LabeledVectors& split, const std::string& manifest_digest, const char* name) {
  if (split.vectors.empty()) throw EmptySplit(std::string(name) + " split is empty");
  if (split.labels.size() != split.vectors.size()) {
    throw ValidationError(std::string(name) + " split: labels and feature vectors differ in length");
  }
  for (const auto& v : split.vectors) {
    if (v.manifest_digest != manifest_digest) throw DigestMismatch(manifest_digest, v.manifest_digest);
  }
}

}  // namespace

PolicyCheckpoint train(const LabeledVectors& train_split, const LabeledVectors& val_split,
                       const FeatureManifest& manifest, const TrainConfig& config, const RewardSpec& reward,
                       const FuzzBackend* backend, const EpochCallback& on_epoch) {
  config.validate();
  check_split(train_split, manifest.digest(), "train");
  check_split(val_split, manifest.digest(), "validation");

  PolicyCheckpoint ck;
  ck.manifest_digest = manifest.digest();
  ck.config = config;
  ck.reward = reward;
  ck.reward.gamma = config.gamma;
  ck.normalizer = fit_normalizer(train_split.vectors, manifest);

  const auto train_examples = prepare_examples(ck, train_split);
  const auto val_examples = prepare_examples(ck, val_split);

  LayerDims dims{manifest.size() + kFuzzSlots, static_cast<std::size_t>(config.hidden1),
                 static_cast<std::size_t>(config.hidden2)};
  PolicyParams params = PolicyParams::init(dims, combine_seed(config.seed, 1), config.dropout);
  Rng rollout_rng(combine_seed(config.seed, 2));
  Rng update_rng(combine_seed(config.seed, 3));
  AdamState adam;

  RolloutOptions rollout;
  rollout.backend = backend;
  rollout.reward = ck.reward;
  rollout.fuzz_budget = config.fuzz_budget;
  rollout.episodes = static_cast<std::size_t>(config.rollout_episodes);

  EpisodeOptions eval;
  eval.backend = backend;
  eval.fuzz_budget = config.fuzz_budget;
  eval.draw = 0;
  eval.reward = ck.reward;

  ck.params = params;
  double best_f1 = -1.0;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs_max; ++epoch) {
    rollout.draw = static_cast<std::uint64_t>(epoch);
    TrajectoryBatch batch = collect_rollouts(params, train_examples, rollout, rollout_rng);
    const double mean_return = batch.mean_return;
    batch.normalize_advantages();
    const LossReport loss = ppo_update(params, batch, config, adam, update_rng);

    const auto verdicts = evaluate_policy(params, val_examples, eval);
    const EvalReport report = compute_metrics(verdicts, val_split.labels);
    EpochLog log;
    log.epoch = epoch;
    log.mean_return = mean_return;
    log.val_accuracy = report.accuracy;
    log.val_f1 = report.f1.value_or(0.0);
    log.fuzz_rate = report.fuzz_invocation_rate;
    log.total_loss = loss.total;
    ck.history.epochs.push_back(log);
    ck.history.epochs_run = epoch;
    if (on_epoch) on_epoch(log);

    if (log.val_f1 > best_f1) {
      best_f1 = log.val_f1;
      ck.params = params;
      ck.history.best_epoch = epoch;
      ck.history.best_val_f1 = log.val_f1;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= config.patience) break;
  }
  return ck;
}

}  // namespace triage
