#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "triage/error.hpp"
#include "triage/synthetic.hpp"
#include "triage/trainer.hpp"
#include "triage/triage_env.hpp"
#include "triage/warning_store.hpp"

namespace fs = std::filesystem;
using namespace triage;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << x;
  return s.str();
}

Outcome baseline_row() {
  std::vector<Verdict> v(1000);
  std::vector<Label> y(1000, Label::FalsePositive);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].id = i + 1;
    v[i].predicted = Label::TruePositive;
    v[i].score = 1.0;
  }
  for (std::size_t i = 0; i < 256; ++i) y[i * 3 + 1] = Label::TruePositive;
  const auto r = compute_metrics(v, y);
  const double p = r.precision.value_or(-1), rec = r.recall.value_or(-1), f1 = r.f1.value_or(-1);
  return {std::abs(p - 0.256) <= 0.001 && rec == 1.0 && std::abs(f1 - 0.407) <= 0.001,
          "precision=" + fmt(p, 3) + " recall=" + fmt(rec, 3) + " f1=" + fmt(f1, 3)};
}

Outcome reward_table() {
  using A = TriageAction;
  using L = Label;
  using O = OutcomeKind;
  struct Row {
    A action;
    L label;
    std::optional<O> prior;
    double expected;
  };
  const std::vector<Row> table = {
      {A::Fuzz, L::TruePositive, std::nullopt, -5},
      {A::Fuzz, L::FalsePositive, std::nullopt, -5},
      {A::ClassifyTP, L::TruePositive, std::nullopt, 15},
      {A::ClassifyTP, L::FalsePositive, std::nullopt, -15},
      {A::ClassifyFP, L::FalsePositive, std::nullopt, 15},
      {A::ClassifyFP, L::TruePositive, std::nullopt, -15},
      {A::ClassifyTP, L::TruePositive, O::Crash, 25},
      {A::ClassifyTP, L::TruePositive, O::SanitizerViolation, 25},
      {A::ClassifyTP, L::FalsePositive, O::Crash, -15},
      {A::ClassifyFP, L::TruePositive, O::Crash, -15},
      {A::ClassifyFP, L::FalsePositive, O::Crash, 15},
      {A::ClassifyFP, L::FalsePositive, O::Clean, 23},
      {A::ClassifyFP, L::TruePositive, O::Clean, -15},
      {A::ClassifyTP, L::TruePositive, O::Clean, 15},
      {A::ClassifyTP, L::FalsePositive, O::Clean, -15},
      {A::ClassifyTP, L::TruePositive, O::Inconclusive, 18},
      {A::ClassifyFP, L::FalsePositive, O::Inconclusive, 18},
      {A::ClassifyTP, L::FalsePositive, O::Inconclusive, -15},
      {A::ClassifyFP, L::TruePositive, O::Inconclusive, -15},
      {A::ClassifyTP, L::TruePositive, O::InfrastructureFailure, 15},
      {A::ClassifyFP, L::FalsePositive, O::InfrastructureFailure, 15},
  };
  std::size_t matched = 0;
  for (const auto& row : table) matched += reward_of(row.action, row.label, row.prior) == row.expected;
  bool illegal = false;
  try {
    reward_of(A::Fuzz, L::TruePositive, O::Clean);
  } catch (const IllegalAction&) {
    illegal = true;
  }
  return {matched == table.size() && illegal,
          std::to_string(matched) + "/" + std::to_string(table.size()) + " cases match; repeat fuzz " +
              (illegal ? "rejected" : "accepted")};
}

Outcome split_fidelity() {
  const auto records = synthetic::labeled_records(4879, 1247, 1);
  const auto a = stratified_split(records, {0.70, 0.15, 0.15}, 0);
  const auto test = a.ids_in(Split::Test);
  std::map<WarningId, Label> label;
  for (const auto& r : records) label[r.id] = *r.label;
  std::size_t pos = 0;
  for (auto id : test) pos += label[id] == Label::TruePositive;
  const double target = 0.256 * static_cast<double>(test.size());
  return {test.size() == 732 && std::abs(static_cast<double>(pos) - target) <= 1.0,
          "test=" + std::to_string(test.size()) + " positives=" + std::to_string(pos) + " (target " +
              fmt(target, 1) + ")"};
}

Outcome learnability() {
  const auto task = synthetic::separable(7);
  TrainConfig c;
  c.seed = 7;
  c.epochs_max = 50;
  const auto a = train(task.train, task.val, task.manifest, c, RewardSpec{}, nullptr);
  const auto b = train(task.train, task.val, task.manifest, c, RewardSpec{}, nullptr);
  const double acc = evaluate_checkpoint(a, task.val, nullptr).report.accuracy;
  const bool same = serialize_checkpoint(a) == serialize_checkpoint(b);
  return {acc >= 0.95 && same,
          "val_accuracy=" + fmt(acc) + " best_epoch=" + std::to_string(a.history.best_epoch) +
              " epochs_run=" + std::to_string(a.history.epochs_run) +
              (same ? " checkpoints identical" : " checkpoints differ")};
}

Outcome fuzz_value() {
  const auto task = synthetic::fuzz_value(5);
  const SimulatedBackend backend(synthetic::fuzz_value_oracle(5));
  TrainConfig c;
  c.seed = 7;
  c.learning_rate = 1e-3;
  c.patience = 20;
  c.epochs_max = 80;
  const auto ck = train(task.train, task.val, task.manifest, c, RewardSpec{}, &backend);
  const auto with = evaluate_checkpoint(ck, task.test, &backend);
  const auto masked = evaluate_checkpoint(ck, task.test, nullptr);
  double amb = 0, amb_fuzz = 0, clear = 0, clear_fuzz = 0;
  for (std::size_t i = 0; i < with.verdicts.size(); ++i) {
    if (task.test_ambiguous[i]) {
      ++amb;
      amb_fuzz += with.verdicts[i].fuzz_used;
    } else {
      ++clear;
      clear_fuzz += with.verdicts[i].fuzz_used;
    }
  }
  const double ra = amb_fuzz / amb, rc = clear_fuzz / clear, rate = with.report.fuzz_invocation_rate;
  const double f1 = with.report.f1.value_or(0), f1m = masked.report.f1.value_or(0);
  return {ra - rc >= 0.20 && rate > 0.0 && rate < 1.0 && f1 - f1m >= 0.05,
          "fuzz_rate ambiguous=" + fmt(ra, 3) + " clear=" + fmt(rc, 3) + " overall=" + fmt(rate, 3) +
              " f1=" + fmt(f1, 3) + " masked_f1=" + fmt(f1m, 3)};
}

Outcome gradients() {
  auto params = PolicyParams::init({6 + kFuzzSlots, 8, 6}, 4, 0.0);
  Rng data(3);
  std::vector<Example> examples;
  for (std::size_t i = 0; i < 32; ++i) {
    Example e;
    e.id = i + 1;
    e.label = i % 3 == 0 ? Label::TruePositive : Label::FalsePositive;
    for (int k = 0; k < 6; ++k) e.features.push_back(data.normal());
    examples.push_back(std::move(e));
  }
  const SimulatedBackend backend(SimOracleConfig{});
  RolloutOptions opt;
  opt.backend = &backend;
  Rng rng(9);
  auto batch = collect_rollouts(params, examples, opt, rng);
  batch.normalize_advantages();
  auto theta = params.flat();
  for (auto& x : theta) x += 0.3 * data.normal();
  params.assign_flat(theta);
  std::vector<std::size_t> idx(batch.steps.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  TrainConfig config;
  PolicyParams grad;
  ppo_loss(params, batch, idx, config, false, 0, &grad);
  const auto g = grad.flat();
  double worst = 0;
  const double h = 1e-4;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto t = theta;
    auto p = params;
    t[i] += h;
    p.assign_flat(t);
    const double up = ppo_loss(p, batch, idx, config, false, 0, nullptr).total;
    t[i] -= 2 * h;
    p.assign_flat(t);
    const double down = ppo_loss(p, batch, idx, config, false, 0, nullptr).total;
    const double numeric = (up - down) / (2 * h);
    const double diff = std::abs(numeric - g[i]);
    worst = std::max(worst, diff / std::max({std::abs(numeric), std::abs(g[i]), 1e-6}));
  }
  std::ostringstream err;
  err << std::scientific << std::setprecision(2) << worst;
  return {worst < 1e-4, std::to_string(theta.size()) + " parameters, max relative error " + err.str()};
}

Outcome metric_oracle() {
  Rng rng(77);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<Verdict> v(n);
    std::vector<Label> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i].id = i + 1;
      v[i].predicted = rng.uniform() < 0.5 ? Label::TruePositive : Label::FalsePositive;
      s[i] = v[i].score = static_cast<double>(rng.below(21)) / 20.0;
      y[i] = rng.uniform() < 0.3 ? Label::TruePositive : Label::FalsePositive;
    }
    const auto r = compute_metrics(v, y);
    const auto c = oracle::confusion(v, y);
    bool ok = r.tp == c.tp && r.fp == c.fp && r.fn == c.fn && r.tn == c.tn && r.mcc == oracle::mcc(c);
    ok = ok && r.accuracy == static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
    if (r.auc_roc.value) ok = ok && std::abs(*r.auc_roc.value - oracle::auc(s, y)) <= 1e-9;
    else ok = ok && (c.tp + c.fn == 0 || c.fp + c.tn == 0);
    if (r.auc_pr.value) ok = ok && std::abs(*r.auc_pr.value - oracle::average_precision(s, y)) <= 1e-9;
    mismatches += !ok;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 sets"};
}

Outcome simulated_statistics() {
  const SimOracleConfig cfg{0.6, 0.02, 0.25, 42};
  const double critical = 9.2103;  // chi-square, 2 dof, alpha 0.01
  std::string detail;
  bool pass = true;
  for (Label label : {Label::TruePositive, Label::FalsePositive}) {
    double counts[3] = {0, 0, 0};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto o = simulate_outcome(cfg, static_cast<WarningId>(i + 1), label, 0);
      counts[o.kind == OutcomeKind::Crash ? 0 : o.kind == OutcomeKind::Inconclusive ? 1 : 2] += 1;
    }
    const double pc = label == Label::TruePositive ? cfg.p_crash_given_tp : cfg.p_crash_given_fp;
    const double expected[3] = {n * pc, n * (1 - pc) * cfg.p_inconclusive, n * (1 - pc) * (1 - cfg.p_inconclusive)};
    double chi2 = 0;
    for (int k = 0; k < 3; ++k) chi2 += (counts[k] - expected[k]) * (counts[k] - expected[k]) / expected[k];
    pass = pass && chi2 < critical;
    detail += std::string(label == Label::TruePositive ? "tp" : "fp") + " chi2=" + fmt(chi2, 3) + " ";
  }
  return {pass, detail + "(critical " + fmt(critical, 3) + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  const std::string bin = TRIAGE_BIN;
  const std::string fx = TRIAGE_FIXTURES;
  const std::vector<std::string> files = {"store.jsonl",    "splits.jsonl",    "features.jsonl", "model.ckpt",
                                          "train.log",      "report.txt",      "verdicts.jsonl", "triage.jsonl",
                                          "summary.txt",    "importance.tsv",  "stdout.txt"};
  std::string runs[2];
  for (int round = 0; round < 2; ++round) {
    const fs::path dir = fs::temp_directory_path() / ("triage-acceptance-" + std::to_string(round));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string() + "/";
    const std::string common = " --seed 11 --backend simulated --set train.hidden1=32 --set train.hidden2=16"
                               " --set train.epochs_max=6 >> " + d + "stdout.txt 2>&1";
    const std::vector<std::string> steps = {
        "ingest --report " + fx + "/pipeline_report.json --labels " + fx + "/pipeline_labels.jsonl --out " + d +
            "store.jsonl",
        "split --store " + d + "store.jsonl --out " + d + "splits.jsonl",
        "featurize --store " + d + "store.jsonl --metadata " + fx + "/pipeline_metadata.jsonl --out " + d +
            "features.jsonl",
        "train --store " + d + "store.jsonl --splits " + d + "splits.jsonl --features " + d + "features.jsonl --log " +
            d + "train.log --out " + d + "model.ckpt",
        "evaluate --checkpoint " + d + "model.ckpt --store " + d + "store.jsonl --splits " + d +
            "splits.jsonl --features " + d + "features.jsonl --split test --jobs 2 --verdicts " + d +
            "verdicts.jsonl --out " + d + "report.txt",
        "triage --report " + fx + "/pipeline_report.json --checkpoint " + d + "model.ckpt --metadata " + fx +
            "/pipeline_metadata.jsonl --out " + d + "triage.jsonl",
        "report --verdicts " + d + "verdicts.jsonl --store " + d + "store.jsonl --out " + d + "summary.txt",
        "importance --checkpoint " + d + "model.ckpt --store " + d + "store.jsonl --splits " + d +
            "splits.jsonl --features " + d + "features.jsonl --split train --out " + d + "importance.tsv",
    };
    for (const auto& step : steps) {
      const std::string cmd = bin + " " + step + common;
      if (std::system(cmd.c_str()) != 0) return {false, "step failed: " + step.substr(0, step.find(' '))};
    }
    for (const auto& f : files) {
      // Paths differ between rounds; strip the directory before comparing.
      std::string content = slurp(dir / f);
      for (std::size_t p = 0; (p = content.find(d, p)) != std::string::npos;) content.erase(p, d.size());
      runs[round] += "== " + f + "\n" + content;
    }
  }
  return {runs[0] == runs[1] && !runs[0].empty(),
          std::to_string(files.size()) + " artifacts, " + std::to_string(runs[0].size()) + " bytes, " +
              (runs[0] == runs[1] ? "identical" : "different")};
}

Outcome importance_sanity() {
  const auto task = synthetic::separable(7);
  TrainConfig c;
  c.seed = 7;
  c.epochs_max = 50;
  const auto ck = train(task.train, task.val, task.manifest, c, RewardSpec{}, nullptr);
  const auto ranks = permutation_importance(ck, task.test, task.manifest, ImportanceMetric::F1, 5, 7);
  return {ranks[0].name == "signal" && ranks[0].mean_delta > 0.3,
          "top=" + ranks[0].name + " delta_f1=" + fmt(ranks[0].mean_delta, 3) + " runner_up=" + ranks[1].name +
              " delta_f1=" + fmt(ranks[1].mean_delta, 3)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"baseline row reproduction", baseline_row},
      {"reward table exhaustiveness", reward_table},
      {"split fidelity", split_fidelity},
      {"PPO learnability and reproducibility", learnability},
      {"fuzz-value property", fuzz_value},
      {"gradient correctness", gradients},
      {"metric oracle equivalence", metric_oracle},
      {"simulated backend statistics", simulated_statistics},
      {"end-to-end CLI determinism", cli_determinism},
      {"importance sanity", importance_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " - "
              << o.detail << " [" << fmt(secs, 2) << "s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
