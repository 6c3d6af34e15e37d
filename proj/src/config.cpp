#include "triage/config.hpp"

#include <charconv>
#include <sstream>

#include "triage/error.hpp"
#include "triage/hash.hpp"

namespace triage {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::None: return "none";
    case BackendKind::Simulated: return "simulated";
    case BackendKind::Recorded: return "recorded";
    case BackendKind::External: return "external";
  }
  return "none";
}

std::optional<BackendKind> parse_backend_kind(std::string_view s) {
  for (auto k : {BackendKind::None, BackendKind::Simulated, BackendKind::Recorded, BackendKind::External}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ValidationError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                        std::string(want));
}

double to_real(std::string_view key, std::string_view v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v, "a finite number");
  return x;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return x;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return x;
}

std::string_view metric_name(ImportanceMetric m) {
  switch (m) {
    case ImportanceMetric::F1: return "f1";
    case ImportanceMetric::Accuracy: return "accuracy";
    case ImportanceMetric::MCC: return "mcc";
  }
  return "f1";
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "master seed for splits, initialization, rollouts and the simulated backend"},
      {"backend", "fuzz backend: none | simulated | recorded | external"},
      {"split.ratios", "train,val,test fractions summing to 1"},
      {"cluster.radius", "line distance joining same-file warnings into a cluster"},
      {"train.epochs_max", "maximum training epochs"},
      {"train.minibatch", "PPO minibatch size"},
      {"train.clip_epsilon", "PPO clip range, in (0, 1)"},
      {"train.learning_rate", "Adam step size"},
      {"train.value_coef", "value-loss weight"},
      {"train.entropy_coef", "entropy-bonus weight"},
      {"train.ppo_epochs", "passes over each rollout batch"},
      {"train.gamma", "discount, in (0, 1]"},
      {"train.patience", "epochs without validation-F1 improvement before stopping"},
      {"train.rollout_episodes", "episodes per epoch; 0 = one per training warning"},
      {"train.dropout", "dropout rate used during updates"},
      {"train.hidden1", "first hidden layer width"},
      {"train.hidden2", "second hidden layer width"},
      {"train.fuzz_budget", "fuzz budget in seconds passed to the backend"},
      {"reward.correct", "reward for a correct classification"},
      {"reward.incorrect", "reward for a wrong classification"},
      {"reward.fuzz_cost", "reward for invoking the fuzzer"},
      {"reward.bonus_crash_tp", "bonus for a correct TP after crash-grade evidence"},
      {"reward.bonus_clean_fp", "bonus for a correct FP after a clean run"},
      {"reward.bonus_inconclusive", "bonus for a correct call after an inconclusive run"},
      {"sim.p_crash_given_tp", "simulated crash probability for true positives"},
      {"sim.p_crash_given_fp", "simulated crash probability for false positives"},
      {"sim.p_inconclusive", "simulated inconclusive probability when no crash"},
      {"external.command", "fuzz command; TRIAGE_FUZZ_CMD overrides"},
      {"external.work_dir", "directory for generated harnesses"},
      {"external.min_budget", "lower clamp for the fuzz budget, seconds"},
      {"external.max_budget", "upper clamp for the fuzz budget, seconds"},
      {"external.grace", "seconds past the budget before the run is killed"},
      {"external.max_concurrent", "fuzz processes allowed to run at once"},
      {"importance.repeats", "shuffles per feature"},
      {"importance.metric", "f1 | accuracy | mcc"},
  };
  return keys;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "seed") seed = to_uint(key, v);
  else if (key == "backend") {
    auto k = parse_backend_kind(v);
    if (!k) bad_value(key, v, "one of none, simulated, recorded, external");
    backend = *k;
  } else if (key == "split.ratios") {
    SplitRatios r{};
    std::size_t i = 0;
    std::string_view rest = v;
    while (true) {
      const auto comma = rest.find(',');
      if (i == 3) bad_value(key, v, "three comma-separated fractions");
      r[i++] = to_real(key, trim(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (i != 3) bad_value(key, v, "three comma-separated fractions");
    ratios = r;
  } else if (key == "cluster.radius") cluster_radius = static_cast<int>(to_int(key, v));
  else if (key == "train.epochs_max") train.epochs_max = static_cast<int>(to_int(key, v));
  else if (key == "train.minibatch") train.minibatch = static_cast<int>(to_int(key, v));
  else if (key == "train.clip_epsilon") train.clip_epsilon = to_real(key, v);
  else if (key == "train.learning_rate") train.learning_rate = to_real(key, v);
  else if (key == "train.value_coef") train.value_coef = to_real(key, v);
  else if (key == "train.entropy_coef") train.entropy_coef = to_real(key, v);
  else if (key == "train.ppo_epochs") train.ppo_epochs = static_cast<int>(to_int(key, v));
  else if (key == "train.gamma") train.gamma = to_real(key, v);
  else if (key == "train.patience") train.patience = static_cast<int>(to_int(key, v));
  else if (key == "train.rollout_episodes") train.rollout_episodes = static_cast<int>(to_int(key, v));
  else if (key == "train.dropout") train.dropout = to_real(key, v);
  else if (key == "train.hidden1") train.hidden1 = static_cast<int>(to_int(key, v));
  else if (key == "train.hidden2") train.hidden2 = static_cast<int>(to_int(key, v));
  else if (key == "train.fuzz_budget") train.fuzz_budget = to_real(key, v);
  else if (key == "reward.correct") reward.correct = to_real(key, v);
  else if (key == "reward.incorrect") reward.incorrect = to_real(key, v);
  else if (key == "reward.fuzz_cost") reward.fuzz_cost = to_real(key, v);
  else if (key == "reward.bonus_crash_tp") reward.bonus_crash_tp = to_real(key, v);
  else if (key == "reward.bonus_clean_fp") reward.bonus_clean_fp = to_real(key, v);
  else if (key == "reward.bonus_inconclusive") reward.bonus_inconclusive = to_real(key, v);
  else if (key == "sim.p_crash_given_tp") sim.p_crash_given_tp = to_real(key, v);
  else if (key == "sim.p_crash_given_fp") sim.p_crash_given_fp = to_real(key, v);
  else if (key == "sim.p_inconclusive") sim.p_inconclusive = to_real(key, v);
  else if (key == "external.command") external.command = std::string(v);
  else if (key == "external.work_dir") external.work_dir = std::string(v);
  else if (key == "external.min_budget") external.min_budget = to_real(key, v);
  else if (key == "external.max_budget") external.max_budget = to_real(key, v);
  else if (key == "external.grace") external.grace = to_real(key, v);
  else if (key == "external.max_concurrent") external.max_concurrent = static_cast<int>(to_int(key, v));
  else if (key == "importance.repeats") importance_repeats = static_cast<int>(to_int(key, v));
  else if (key == "importance.metric") {
    if (v == "f1") importance_metric = ImportanceMetric::F1;
    else if (v == "accuracy") importance_metric = ImportanceMetric::Accuracy;
    else if (v == "mcc") importance_metric = ImportanceMetric::MCC;
    else bad_value(key, v, "one of f1, accuracy, mcc");
  } else {
    throw ValidationError("unknown config key '" + std::string(key) + "'");
  }
}

void RunConfig::finalize() {
  train.seed = seed;
  sim.seed = seed;
  reward.gamma = train.gamma;
  train.validate();
  sim.validate();
  if (cluster_radius < 0) throw ValidationError("cluster.radius must be non-negative");
  if (importance_repeats < 1) throw ValidationError("importance.repeats must be at least 1");
  if (!(external.min_budget > 0.0 && external.min_budget <= external.max_budget)) {
    throw ValidationError("external budget bounds must satisfy 0 < min_budget <= max_budget");
  }
  if (external.max_concurrent < 1) throw ValidationError("external.max_concurrent must be at least 1");
  if (!(external.grace >= 0.0)) throw ValidationError("external.grace must be non-negative");
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  out << "seed=" << seed << '\n';
  out << "backend=" << to_string(backend) << '\n';
  out << "split.ratios=" << format_real(ratios[0]) << ',' << format_real(ratios[1]) << ','
      << format_real(ratios[2]) << '\n';
  out << "cluster.radius=" << cluster_radius << '\n';
  out << "train.epochs_max=" << train.epochs_max << '\n';
  out << "train.minibatch=" << train.minibatch << '\n';
  out << "train.clip_epsilon=" << format_real(train.clip_epsilon) << '\n';
  out << "train.learning_rate=" << format_real(train.learning_rate) << '\n';
  out << "train.value_coef=" << format_real(train.value_coef) << '\n';
  out << "train.entropy_coef=" << format_real(train.entropy_coef) << '\n';
  out << "train.ppo_epochs=" << train.ppo_epochs << '\n';
  out << "train.gamma=" << format_real(train.gamma) << '\n';
  out << "train.patience=" << train.patience << '\n';
  out << "train.rollout_episodes=" << train.rollout_episodes << '\n';
  out << "train.dropout=" << format_real(train.dropout) << '\n';
  out << "train.hidden1=" << train.hidden1 << '\n';
  out << "train.hidden2=" << train.hidden2 << '\n';
  out << "train.fuzz_budget=" << format_real(train.fuzz_budget) << '\n';
  out << "reward.correct=" << format_real(reward.correct) << '\n';
  out << "reward.incorrect=" << format_real(reward.incorrect) << '\n';
  out << "reward.fuzz_cost=" << format_real(reward.fuzz_cost) << '\n';
  out << "reward.bonus_crash_tp=" << format_real(reward.bonus_crash_tp) << '\n';
  out << "reward.bonus_clean_fp=" << format_real(reward.bonus_clean_fp) << '\n';
  out << "reward.bonus_inconclusive=" << format_real(reward.bonus_inconclusive) << '\n';
  out << "sim.p_crash_given_tp=" << format_real(sim.p_crash_given_tp) << '\n';
  out << "sim.p_crash_given_fp=" << format_real(sim.p_crash_given_fp) << '\n';
  out << "sim.p_inconclusive=" << format_real(sim.p_inconclusive) << '\n';
  out << "external.command=" << external.command << '\n';
  out << "external.work_dir=" << external.work_dir << '\n';
  out << "external.min_budget=" << format_real(external.min_budget) << '\n';
  out << "external.max_budget=" << format_real(external.max_budget) << '\n';
  out << "external.grace=" << format_real(external.grace) << '\n';
  out << "external.max_concurrent=" << external.max_concurrent << '\n';
  out << "importance.repeats=" << importance_repeats << '\n';
  out << "importance.metric=" << metric_name(importance_metric) << '\n';
  return out.str();
}

std::string RunConfig::digest() const { return to_hex(fnv1a64(canonical())); }

void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string_view key = trim(s.substr(0, eq));
    try {
      config.set(key, s.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
}

}  // namespace triage
