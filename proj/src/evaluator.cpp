#include "triage/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "triage/error.hpp"
#include "triage/hash.hpp"

namespace triage {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Metric auc_roc(std::span<const double> scores, std::span<const Label> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::TruePositive) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return {std::nullopt, "AUC-ROC needs both classes"};
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return {u / (p * static_cast<double>(negatives)), ""};
}

Metric average_precision(std::span<const double> scores, std::span<const Label> labels) {
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (auto l : labels) positives += l == Label::TruePositive ? 1 : 0;
  if (positives == 0) return {std::nullopt, "AUC-PR needs at least one positive"};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == Label::TruePositive ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return {ap, ""};
}

EvalReport compute_metrics(std::span<const Verdict> verdicts, std::span<const Label> labels) {
  if (verdicts.empty()) throw EmptyInput("cannot compute metrics over zero predictions");
  if (verdicts.size() != labels.size()) {
    throw ValidationError("predictions (" + std::to_string(verdicts.size()) + ") and labels (" +
                          std::to_string(labels.size()) + ") differ in length");
  }
  EvalReport r;
  r.n = verdicts.size();
  std::vector<double> scores;
  scores.reserve(r.n);
  std::size_t fuzzed = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const auto& v = verdicts[i];
    if (!(v.score >= 0.0 && v.score <= 1.0)) throw ValidationError("score outside [0, 1] for " + to_hex(v.id));
    scores.push_back(v.score);
    fuzzed += v.fuzz_used ? 1 : 0;
    const bool pred = v.predicted == Label::TruePositive;
    const bool truth = labels[i] == Label::TruePositive;
    if (pred && truth) ++r.tp;
    else if (pred && !truth) ++r.fp;
    else if (!pred && truth) ++r.fn;
    else ++r.tn;
  }
  const auto d = [](std::size_t x) { return static_cast<double>(x); };
  r.accuracy = d(r.tp + r.tn) / d(r.n);
  if (r.tp + r.fp > 0) r.precision = {d(r.tp) / d(r.tp + r.fp), ""};
  else r.precision = {std::nullopt, "no predicted positives (TP+FP=0)"};
  if (r.tp + r.fn > 0) r.recall = {d(r.tp) / d(r.tp + r.fn), ""};
  else r.recall = {std::nullopt, "no actual positives (TP+FN=0)"};
  if (2 * r.tp + r.fp + r.fn > 0) r.f1 = {2.0 * d(r.tp) / d(2 * r.tp + r.fp + r.fn), ""};
  else r.f1 = {std::nullopt, "no positives predicted or present"};
  const double denom = d(r.tp + r.fp) * d(r.tp + r.fn) * d(r.tn + r.fp) * d(r.tn + r.fn);
  r.mcc = denom > 0.0 ? (d(r.tp) * d(r.tn) - d(r.fp) * d(r.fn)) / std::sqrt(denom) : 0.0;
  r.auc_roc = auc_roc(scores, labels);
  r.auc_pr = average_precision(scores, labels);
  r.fuzz_invocation_rate = d(fuzzed) / d(r.n);
  return r;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  auto metric = [&](const char* key, const Metric& m) {
    out << key << '=';
    if (m.value) out << format_real(*m.value);
    else out << "absent (" << m.reason << ")";
    out << '\n';
  };
  out << "n=" << r.n << '\n';
  out << "tp=" << r.tp << '\n';
  out << "fp=" << r.fp << '\n';
  out << "fn=" << r.fn << '\n';
  out << "tn=" << r.tn << '\n';
  out << "accuracy=" << format_real(r.accuracy) << '\n';
  metric("precision", r.precision);
  metric("recall", r.recall);
  metric("f1", r.f1);
  out << "mcc=" << format_real(r.mcc) << '\n';
  metric("auc_roc", r.auc_roc);
  metric("auc_pr", r.auc_pr);
  out << "fuzz_invocation_rate=" << format_real(r.fuzz_invocation_rate) << '\n';
  return out.str();
}

std::string serialize_verdicts(std::span<const Verdict> verdicts) {
  std::string out;
  for (const auto& v : verdicts) {
    ordered_json o;
    o["warning_id"] = to_hex(v.id);
    o["predicted"] = std::string(label_code(v.predicted));
    o["score"] = v.score;
    o["fuzz_used"] = v.fuzz_used;
    o["fuzz_kind"] = v.fuzz_kind ? ordered_json(std::string(to_string(*v.fuzz_kind))) : ordered_json(nullptr);
    out += o.dump();
    out += '\n';
  }
  return out;
}

std::vector<Verdict> parse_verdicts(std::string_view content) {
  std::vector<Verdict> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw SchemaError(index, "<line>", "of the verdicts file is not valid JSON");
    }
    Verdict v;
    auto id = obj.contains("warning_id") && obj["warning_id"].is_string()
                  ? parse_hex(obj["warning_id"].get<std::string>())
                  : std::nullopt;
    if (!id) throw SchemaError(index, "warning_id", "must be a hex string");
    v.id = *id;
    auto pred = obj.contains("predicted") && obj["predicted"].is_string()
                    ? parse_label_code(obj["predicted"].get<std::string>())
                    : std::nullopt;
    if (!pred) throw SchemaError(index, "predicted", "must be \"tp\" or \"fp\"");
    v.predicted = *pred;
    if (!obj.contains("score") || !obj["score"].is_number()) throw SchemaError(index, "score", "must be a number");
    v.score = obj["score"].get<double>();
    v.fuzz_used = obj.value("fuzz_used", false);
    if (obj.contains("fuzz_kind") && obj["fuzz_kind"].is_string()) {
      v.fuzz_kind = parse_outcome_kind(obj["fuzz_kind"].get<std::string>());
      if (!v.fuzz_kind) throw SchemaError(index, "fuzz_kind", "must name a fuzz outcome kind");
    }
    out.push_back(v);
    ++index;
  }
  return out;
}

Verdict run_greedy_episode(const PolicyParams& params, const Example& example, const EpisodeOptions& options) {
  const bool can_fuzz = options.backend != nullptr && !options.mask_fuzz;
  TriageState state = env_reset(example.features, example.features.size());
  Verdict verdict;
  verdict.id = example.id;
  for (int step = 0; step < 2; ++step) {
    const ActionDistribution dist = policy_forward(params, state.values(), false, nullptr);
    const bool mask = !can_fuzz || !state.fuzz_allowed();
    const auto [action, signals] = select_action(dist, SelectMode::Greedy, mask, nullptr);
    if (action == TriageAction::Fuzz) {
      FuzzRequest request{example.id, example.record, example.label, options.fuzz_budget, options.draw};
      StepResult r = env_step(state, action, example.label, *options.backend, request, options.reward);
      verdict.fuzz_used = true;
      verdict.fuzz_kind = r.outcome->kind;
      state = *r.next;
      continue;
    }
    verdict.predicted = action == TriageAction::ClassifyTP ? Label::TruePositive : Label::FalsePositive;
    verdict.score = masked_probs(dist.probs, true)[static_cast<std::size_t>(TriageAction::ClassifyTP)];
    return verdict;
  }
  throw Error("episode did not terminate");  // unreachable: step 2 masks Fuzz
}

std::vector<Verdict> evaluate_policy(const PolicyParams& params, std::span<const Example> examples,
                                     const EpisodeOptions& options, unsigned jobs) {
  std::vector<Verdict> out(examples.size());
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, examples.size()))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) out[i] = run_greedy_episode(params, examples[i], options);
    return out;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < examples.size(); i += jobs) {
          out[i] = run_greedy_episode(params, examples[i], options);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Example> prepare_examples(const PolicyCheckpoint& checkpoint, const LabeledVectors& split) {
  if (split.labels.size() != split.vectors.size() && !split.labels.empty()) {
    throw ValidationError("labels and feature vectors differ in length");
  }
  std::vector<Example> out;
  out.reserve(split.vectors.size());
  for (std::size_t i = 0; i < split.vectors.size(); ++i) {
    const auto& raw = split.vectors[i];
    if (raw.manifest_digest != checkpoint.manifest_digest) {
      throw DigestMismatch(checkpoint.manifest_digest, raw.manifest_digest);
    }
    Example e;
    e.id = raw.warning_id;
    e.features = normalize(raw, checkpoint.normalizer).values;
    if (!split.labels.empty()) e.label = split.labels[i];
    if (i < split.records.size()) e.record = split.records[i];
    out.push_back(std::move(e));
  }
  return out;
}

Evaluation evaluate_checkpoint(const PolicyCheckpoint& checkpoint, const LabeledVectors& split,
                               const FuzzBackend* backend, unsigned jobs) {
  const auto examples = prepare_examples(checkpoint, split);
  EpisodeOptions options;
  options.backend = backend;
  options.fuzz_budget = checkpoint.config.fuzz_budget;
  options.reward = checkpoint.reward;
  Evaluation out;
  out.verdicts = evaluate_policy(checkpoint.params, examples, options, jobs);
  out.report = compute_metrics(out.verdicts, split.labels);
  return out;
}

namespace {

// Greedy TP/FP decisions with Fuzz masked, for every row of `states`.
std::vector<Verdict> masked_decisions(const PolicyParams& params, const Matrix& states) {
  ForwardCache cache;
  forward_batch(params, states, false, nullptr, cache);
  std::vector<Verdict> out(static_cast<std::size_t>(states.rows()));
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    const double zt = cache.logits(r, 0);
    const double zf = cache.logits(r, 1);
    const double m = std::max(zt, zf);
    const double pt = std::exp(zt - m);
    const double pf = std::exp(zf - m);
    auto& v = out[static_cast<std::size_t>(r)];
    v.score = pt / (pt + pf);
    v.predicted = pt >= pf ? Label::TruePositive : Label::FalsePositive;
  }
  return out;
}

double metric_value(const EvalReport& r, ImportanceMetric metric) {
  switch (metric) {
    case ImportanceMetric::F1: return r.f1.value_or(0.0);
    case ImportanceMetric::Accuracy: return r.accuracy;
    case ImportanceMetric::MCC: return r.mcc;
  }
  return 0.0;
}

}  // namespace

std::vector<FeatureImportance> permutation_importance(const PolicyCheckpoint& checkpoint,
                                                      const LabeledVectors& split,
                                                      const FeatureManifest& manifest, ImportanceMetric metric,
                                                      int repeats, std::uint64_t seed) {
  if (repeats < 1) throw ValidationError("permutation importance needs repeats >= 1");
  require_digest(checkpoint, manifest.digest());
  const auto examples = prepare_examples(checkpoint, split);
  if (examples.empty()) throw EmptyInput("permutation importance over an empty split");
  const auto rows = static_cast<Eigen::Index>(examples.size());
  const auto features = static_cast<Eigen::Index>(manifest.size());
  Matrix states = Matrix::Zero(rows, features + static_cast<Eigen::Index>(kFuzzSlots));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& f = examples[static_cast<std::size_t>(r)].features;
    for (Eigen::Index c = 0; c < features; ++c) states(r, c) = f[static_cast<std::size_t>(c)];
    states(r, features) = 1.0;  // fuzz slot NotRun
  }

  const double baseline = metric_value(compute_metrics(masked_decisions(checkpoint.params, states), split.labels), metric);
  std::vector<FeatureImportance> out;
  for (Eigen::Index c = 0; c < features; ++c) {
    Rng rng(combine_seed(seed, static_cast<std::uint64_t>(c)));
    double total = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(rows));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Matrix shuffled = states;
      for (Eigen::Index r = 0; r < rows; ++r) shuffled(r, c) = states(perm[static_cast<std::size_t>(r)], c);
      const double score =
          metric_value(compute_metrics(masked_decisions(checkpoint.params, shuffled), split.labels), metric);
      total += baseline - score;
    }
    out.push_back({static_cast<std::size_t>(c), manifest[static_cast<std::size_t>(c)].name,
                   total / static_cast<double>(repeats)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.mean_delta > b.mean_delta; });
  return out;
}

}  // namespace triage
