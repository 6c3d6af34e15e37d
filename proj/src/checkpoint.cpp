#include "triage/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "triage/error.hpp"

namespace triage {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("train config: " + what); };
  if (epochs_max < 1) fail("epochs_max must be positive");
  if (minibatch < 1) fail("minibatch must be positive");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("clip_epsilon must lie in (0, 1)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(value_coef >= 0.0)) fail("value_coef must be non-negative");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be non-negative");
  if (ppo_epochs < 1) fail("ppo_epochs must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (patience < 0) fail("patience must be non-negative");
  if (rollout_episodes < 0) fail("rollout_episodes must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (hidden1 < 1 || hidden2 < 1) fail("hidden sizes must be positive");
  if (!(fuzz_budget > 0.0)) fail("fuzz_budget must be positive");
}

std::string format_real(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw Error("cannot format real");
  return std::string(buf, ptr);
}

std::string format_epoch_log(const EpochLog& log) {
  std::ostringstream out;
  out << "epoch=" << log.epoch << " mean_return=" << format_real(log.mean_return)
      << " val_accuracy=" << format_real(log.val_accuracy) << " val_f1=" << format_real(log.val_f1)
      << " fuzz_rate=" << format_real(log.fuzz_rate) << " loss=" << format_real(log.total_loss);
  return out.str();
}

namespace {

void write_reals(std::ostringstream& out, const char* key, const double* data, std::size_t n) {
  out << key << ' ' << n;
  for (std::size_t i = 0; i < n; ++i) out << ' ' << format_real(data[i]);
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::string_view content) : content_(content) {}

  std::vector<std::string> line(std::string_view expected_key) {
    if (pos_ >= content_.size()) fail("unexpected end of checkpoint, wanted '" + std::string(expected_key) + "'");
    std::size_t end = content_.find('\n', pos_);
    if (end == std::string_view::npos) end = content_.size();
    std::istringstream in{std::string(content_.substr(pos_, end - pos_))};
    pos_ = end + 1;
    ++line_no_;
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    if (tokens.empty() || tokens[0] != expected_key) {
      fail("expected '" + std::string(expected_key) + "' on line " + std::to_string(line_no_));
    }
    tokens.erase(tokens.begin());
    return tokens;
  }

  double real(const std::string& s) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad real '" + s + "' on line " + std::to_string(line_no_));
    return x;
  }

  long long integer(const std::string& s) {
    long long x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad integer '" + s + "' on line " + std::to_string(line_no_));
    return x;
  }

  std::uint64_t unsigned_integer(const std::string& s) {
    std::uint64_t x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad integer '" + s + "' on line " + std::to_string(line_no_));
    return x;
  }

  std::vector<double> reals(std::string_view key) {
    auto t = line(key);
    if (t.empty()) fail("missing count for '" + std::string(key) + "'");
    const auto n = static_cast<std::size_t>(integer(t[0]));
    if (t.size() != n + 1) fail("'" + std::string(key) + "' declares " + t[0] + " values");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = real(t[i + 1]);
    return v;
  }

  double scalar(std::string_view key) {
    auto t = line(key);
    if (t.size() != 1) fail("'" + std::string(key) + "' takes one value");
    return real(t[0]);
  }

  long long int_scalar(std::string_view key) {
    auto t = line(key);
    if (t.size() != 1) fail("'" + std::string(key) + "' takes one value");
    return integer(t[0]);
  }

  [[noreturn]] void fail(const std::string& what) const { throw ValidationError("checkpoint: " + what); }

 private:
  std::string_view content_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const PolicyCheckpoint& ck) {
  std::ostringstream out;
  const auto& p = ck.params;
  out << "triage-checkpoint " << kCheckpointFormatVersion << '\n';
  out << "manifest_digest " << ck.manifest_digest << '\n';
  out << "dims " << p.dims.input << ' ' << p.dims.hidden1 << ' ' << p.dims.hidden2 << ' ' << kActionCount << '\n';
  out << "dropout " << format_real(p.dropout) << '\n';
  out << "param_seed " << p.seed << '\n';
  const auto flat = p.flat();
  write_reals(out, "weights", flat.data(), flat.size());

  const auto& n = ck.normalizer;
  out << "normalizer_digest " << n.manifest_digest << '\n';
  out << "normalizer_fitted_on " << to_string(n.fitted_on) << '\n';
  write_reals(out, "normalizer_mean", n.mean.data(), n.mean.size());
  write_reals(out, "normalizer_sd", n.sd.data(), n.sd.size());
  out << "normalizer_passthrough " << n.passthrough.size();
  for (auto b : n.passthrough) out << ' ' << static_cast<int>(b);
  out << '\n';

  const auto& c = ck.config;
  out << "epochs_max " << c.epochs_max << '\n';
  out << "minibatch " << c.minibatch << '\n';
  out << "clip_epsilon " << format_real(c.clip_epsilon) << '\n';
  out << "learning_rate " << format_real(c.learning_rate) << '\n';
  out << "value_coef " << format_real(c.value_coef) << '\n';
  out << "entropy_coef " << format_real(c.entropy_coef) << '\n';
  out << "ppo_epochs " << c.ppo_epochs << '\n';
  out << "gamma " << format_real(c.gamma) << '\n';
  out << "patience " << c.patience << '\n';
  out << "rollout_episodes " << c.rollout_episodes << '\n';
  out << "config_dropout " << format_real(c.dropout) << '\n';
  out << "hidden1 " << c.hidden1 << '\n';
  out << "hidden2 " << c.hidden2 << '\n';
  out << "fuzz_budget " << format_real(c.fuzz_budget) << '\n';
  out << "seed " << c.seed << '\n';

  const auto& r = ck.reward;
  out << "reward_correct " << format_real(r.correct) << '\n';
  out << "reward_incorrect " << format_real(r.incorrect) << '\n';
  out << "reward_fuzz_cost " << format_real(r.fuzz_cost) << '\n';
  out << "reward_bonus_crash_tp " << format_real(r.bonus_crash_tp) << '\n';
  out << "reward_bonus_clean_fp " << format_real(r.bonus_clean_fp) << '\n';
  out << "reward_bonus_inconclusive " << format_real(r.bonus_inconclusive) << '\n';
  out << "reward_gamma " << format_real(r.gamma) << '\n';

  const auto& h = ck.history;
  out << "history " << h.epochs_run << ' ' << h.best_epoch << ' ' << format_real(h.best_val_f1) << ' '
      << h.epochs.size() << '\n';
  for (const auto& e : h.epochs) {
    out << "epoch " << e.epoch << ' ' << format_real(e.mean_return) << ' ' << format_real(e.val_accuracy) << ' '
        << format_real(e.val_f1) << ' ' << format_real(e.fuzz_rate) << ' ' << format_real(e.total_loss) << '\n';
  }
  out << "end\n";
  return out.str();
}

PolicyCheckpoint parse_checkpoint(std::string_view content) {
  Reader in(content);
  PolicyCheckpoint ck;
  {
    auto t = in.line("triage-checkpoint");
    if (t.size() != 1 || in.integer(t[0]) != kCheckpointFormatVersion) {
      in.fail("unsupported format version");
    }
  }
  {
    auto t = in.line("manifest_digest");
    if (t.size() != 1) in.fail("manifest_digest takes one value");
    ck.manifest_digest = t[0];
  }
  LayerDims dims;
  {
    auto t = in.line("dims");
    if (t.size() != 4 || in.integer(t[3]) != static_cast<long long>(kActionCount)) in.fail("bad dims line");
    dims.input = static_cast<std::size_t>(in.integer(t[0]));
    dims.hidden1 = static_cast<std::size_t>(in.integer(t[1]));
    dims.hidden2 = static_cast<std::size_t>(in.integer(t[2]));
  }
  const double dropout = in.scalar("dropout");
  ck.params = PolicyParams::zeros(dims, dropout);
  {
    auto t = in.line("param_seed");
    if (t.size() != 1) in.fail("param_seed takes one value");
    ck.params.seed = in.unsigned_integer(t[0]);
  }
  ck.params.assign_flat(in.reals("weights"));
  ck.params.validate();

  {
    auto t = in.line("normalizer_digest");
    if (t.size() != 1) in.fail("normalizer_digest takes one value");
    ck.normalizer.manifest_digest = t[0];
  }
  {
    auto t = in.line("normalizer_fitted_on");
    if (t.size() != 1 || t[0] != "train") in.fail("normalizer must be fitted on the train split");
    ck.normalizer.fitted_on = Split::Train;
  }
  ck.normalizer.mean = in.reals("normalizer_mean");
  ck.normalizer.sd = in.reals("normalizer_sd");
  {
    auto t = in.line("normalizer_passthrough");
    if (t.empty() || static_cast<std::size_t>(in.integer(t[0])) + 1 != t.size()) in.fail("bad passthrough line");
    for (std::size_t i = 1; i < t.size(); ++i) ck.normalizer.passthrough.push_back(in.integer(t[i]) != 0 ? 1 : 0);
  }
  if (ck.normalizer.mean.size() != ck.normalizer.sd.size() ||
      ck.normalizer.mean.size() != ck.normalizer.passthrough.size()) {
    in.fail("normalizer arrays differ in length");
  }
  if (ck.normalizer.manifest_digest != ck.manifest_digest) in.fail("normalizer digest differs from checkpoint digest");
  if (ck.normalizer.mean.size() + kFuzzSlots != dims.input) in.fail("normalizer length does not match policy input");

  auto& c = ck.config;
  c.epochs_max = static_cast<int>(in.int_scalar("epochs_max"));
  c.minibatch = static_cast<int>(in.int_scalar("minibatch"));
  c.clip_epsilon = in.scalar("clip_epsilon");
  c.learning_rate = in.scalar("learning_rate");
  c.value_coef = in.scalar("value_coef");
  c.entropy_coef = in.scalar("entropy_coef");
  c.ppo_epochs = static_cast<int>(in.int_scalar("ppo_epochs"));
  c.gamma = in.scalar("gamma");
  c.patience = static_cast<int>(in.int_scalar("patience"));
  c.rollout_episodes = static_cast<int>(in.int_scalar("rollout_episodes"));
  c.dropout = in.scalar("config_dropout");
  c.hidden1 = static_cast<int>(in.int_scalar("hidden1"));
  c.hidden2 = static_cast<int>(in.int_scalar("hidden2"));
  c.fuzz_budget = in.scalar("fuzz_budget");
  {
    auto t = in.line("seed");
    if (t.size() != 1) in.fail("seed takes one value");
    c.seed = in.unsigned_integer(t[0]);
  }

  auto& r = ck.reward;
  r.correct = in.scalar("reward_correct");
  r.incorrect = in.scalar("reward_incorrect");
  r.fuzz_cost = in.scalar("reward_fuzz_cost");
  r.bonus_crash_tp = in.scalar("reward_bonus_crash_tp");
  r.bonus_clean_fp = in.scalar("reward_bonus_clean_fp");
  r.bonus_inconclusive = in.scalar("reward_bonus_inconclusive");
  r.gamma = in.scalar("reward_gamma");

  {
    auto t = in.line("history");
    if (t.size() != 4) in.fail("bad history line");
    ck.history.epochs_run = static_cast<int>(in.integer(t[0]));
    ck.history.best_epoch = static_cast<int>(in.integer(t[1]));
    ck.history.best_val_f1 = in.real(t[2]);
    const auto n = static_cast<std::size_t>(in.integer(t[3]));
    for (std::size_t i = 0; i < n; ++i) {
      auto e = in.line("epoch");
      if (e.size() != 6) in.fail("bad epoch line");
      ck.history.epochs.push_back({static_cast<int>(in.integer(e[0])), in.real(e[1]), in.real(e[2]), in.real(e[3]),
                                   in.real(e[4]), in.real(e[5])});
    }
  }
  in.line("end");
  return ck;
}

void require_digest(const PolicyCheckpoint& checkpoint, std::string_view digest) {
  if (checkpoint.manifest_digest != digest) throw DigestMismatch(checkpoint.manifest_digest, std::string(digest));
}

}  // namespace triage
