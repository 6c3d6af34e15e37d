#include "triage/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "triage/config.hpp"
#include "triage/error.hpp"
#include "triage/evaluator.hpp"
#include "triage/featurizer.hpp"
#include "triage/harness.hpp"
#include "triage/hash.hpp"
#include "triage/trainer.hpp"

namespace triage {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("--" + flag + ": cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write to '" + path + "' failed");
}

// Options shared by every subcommand.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string backend;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "flat key = value config file");
  cmd->add_option("--set", c.sets, "override one config key (key=value); repeatable");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--backend", c.backend, "fuzz backend: none | simulated | recorded | external");
  cmd->add_option("--jobs", c.jobs, "worker threads for evaluation")->check(CLI::Range(1u, 256u));
}

// Defaults < config file < --set < dedicated flags.
RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) apply_config_text(cfg, read_file(c.config_file, "config"));
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backend.empty()) {
    auto k = parse_backend_kind(c.backend);
    if (!k) throw UsageError("--backend must be one of none, simulated, recorded, external");
    cfg.backend = *k;
  }
  cfg.finalize();
  return cfg;
}

void require_inputs(const std::map<std::string, std::string*>& inputs) {
  for (const auto& [flag, path] : inputs) {
    if (!path->empty() && !fs::exists(*path)) {
      throw ValidationError("--" + flag + ": input '" + *path + "' does not exist");
    }
  }
}

struct Backends {
  std::vector<RecordedOutcome> recorded;
  std::unique_ptr<FuzzBackend> backend;
};

Backends make_backend(const RunConfig& cfg, const std::string& recorded_path, const std::string& templates_dir) {
  Backends b;
  switch (cfg.backend) {
    case BackendKind::None: break;
    case BackendKind::Simulated: b.backend = std::make_unique<SimulatedBackend>(cfg.sim); break;
    case BackendKind::Recorded:
      if (recorded_path.empty()) throw UsageError("--recorded is required with --backend recorded");
      b.recorded = parse_recorded_outcomes(read_file(recorded_path, "recorded"));
      b.backend = std::make_unique<RecordedBackend>(b.recorded);
      break;
    case BackendKind::External: {
      ExternalConfig ext = apply_environment(cfg.external);
      if (ext.command.empty()) {
        throw UsageError("--backend external needs external.command or the TRIAGE_FUZZ_CMD environment variable");
      }
      TemplateSet templates = templates_dir.empty() ? TemplateSet::builtin() : TemplateSet::load(templates_dir);
      b.backend = std::make_unique<ExternalBackend>(std::move(ext), std::move(templates));
      break;
    }
  }
  return b;
}

std::vector<WarningRecord> load_store(const std::string& path) { return parse_store(read_file(path, "store")); }

std::map<WarningId, const WarningRecord*> index_records(const std::vector<WarningRecord>& records) {
  std::map<WarningId, const WarningRecord*> out;
  for (const auto& r : records) out.emplace(r.id, &r);
  return out;
}

// Feature vectors, labels and records of one split, ordered by warning id.
LabeledVectors load_split(const std::vector<WarningRecord>& records, const SplitAssignment& splits,
                          const std::vector<FeatureVector>& features, Split which) {
  const auto by_id = index_records(records);
  std::map<WarningId, const FeatureVector*> vec_by_id;
  for (const auto& v : features) vec_by_id.emplace(v.warning_id, &v);
  LabeledVectors out;
  for (WarningId id : splits.ids_in(which)) {
    auto r = by_id.find(id);
    if (r == by_id.end()) throw ValidationError("split lists warning " + to_hex(id) + " which is not in the store");
    auto v = vec_by_id.find(id);
    if (v == vec_by_id.end()) throw ValidationError("no feature vector for warning " + to_hex(id));
    if (!r->second->label) throw UnlabeledRecordError(to_hex(id));
    out.vectors.push_back(*v->second);
    out.labels.push_back(*r->second->label);
    out.records.push_back(r->second);
  }
  return out;
}

Split parse_split_flag(const std::string& s) {
  auto split = parse_split(s);
  if (!split) throw UsageError("--split must be train, val or test");
  return *split;
}

std::map<std::string, PackageMetadata> load_metadata(const std::string& path) {
  std::map<std::string, PackageMetadata> out;
  if (path.empty()) return out;
  for (auto& m : parse_package_metadata(read_file(path, "metadata"))) out[m.name] = m;
  return out;
}

std::vector<FeatureVector> featurize_records(const std::vector<WarningRecord>& records,
                                             const std::map<std::string, PackageMetadata>& metadata,
                                             const std::vector<FeatureVector>* precomputed) {
  std::map<int, int> cluster_sizes;
  for (const auto& r : records) {
    if (r.cluster_id) ++cluster_sizes[*r.cluster_id];
  }
  std::map<WarningId, const FeatureVector*> sidecar;
  if (precomputed) {
    for (const auto& v : *precomputed) sidecar.emplace(v.warning_id, &v);
  }
  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::optional<PackageMetadata> meta;
    if (auto it = metadata.find(package_name_from_path(r.file)); it != metadata.end()) meta = it->second;
    AnalysisContext ctx;
    if (r.cluster_id) ctx.cluster_size = cluster_sizes[*r.cluster_id];
    if (precomputed) {
      auto it = sidecar.find(r.id);
      if (it == sidecar.end()) throw ValidationError("--precomputed has no vector for warning " + r.id_hex());
      out.push_back(extract_features(r, meta, ctx, it->second, ExtractionMode::Precomputed));
    } else {
      out.push_back(extract_features(r, meta, ctx));
    }
  }
  return out;
}

void echo_digest(std::ostream& out, const RunConfig& cfg) { out << "config_digest=" << cfg.digest() << '\n'; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reinforcement-learning triage of unsafe-code analyzer warnings", "triage"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand every subcommand's help");

  Common common;
  std::string report, labels, store, splits, features, metadata, precomputed, checkpoint, out_path, verdicts,
      recorded, templates, ids, ids_file, log_path, manifest_path, split_name = "test";

  auto* ingest = app.add_subcommand("ingest", "parse an analyzer report into the warning store");
  ingest->add_option("--report", report, "analyzer report (JSON array)")->required();
  ingest->add_option("--labels", labels, "label file (JSON lines)");
  ingest->add_option("--out", out_path, "store file to write")->required();

  auto* split = app.add_subcommand("split", "stratified train/val/test split of a labeled store");
  split->add_option("--store", store, "warning store")->required();
  split->add_option("--out", out_path, "split file to write")->required();

  auto* featurize = app.add_subcommand("featurize", "extract feature vectors for every stored warning");
  featurize->add_option("--store", store, "warning store")->required();
  featurize->add_option("--metadata", metadata, "package metadata (JSON lines)");
  featurize->add_option("--precomputed", precomputed, "feature sidecar to validate and pass through");
  featurize->add_option("--out", out_path, "feature file to write")->required();
  featurize->add_option("--manifest", manifest_path, "feature manifest listing to write");

  auto* train_cmd = app.add_subcommand("train", "train the PPO policy");
  train_cmd->add_option("--store", store, "warning store")->required();
  train_cmd->add_option("--splits", splits, "split file")->required();
  train_cmd->add_option("--features", features, "feature file")->required();
  train_cmd->add_option("--recorded", recorded, "recorded fuzz outcomes (recorded backend)");
  train_cmd->add_option("--log", log_path, "epoch log file to write");
  train_cmd->add_option("--out", out_path, "checkpoint to write")->required();

  auto* evaluate = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint on one split");
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  evaluate->add_option("--store", store, "warning store")->required();
  evaluate->add_option("--splits", splits, "split file")->required();
  evaluate->add_option("--features", features, "feature file")->required();
  evaluate->add_option("--split", split_name, "train | val | test");
  evaluate->add_option("--recorded", recorded, "recorded fuzz outcomes (recorded backend)");
  evaluate->add_option("--templates", templates, "harness template directory (external backend)");
  evaluate->add_option("--verdicts", verdicts, "per-warning verdicts file to write");
  evaluate->add_option("--out", out_path, "report file to write")->required();

  auto* triage_cmd = app.add_subcommand("triage", "classify the warnings of a fresh analyzer report");
  triage_cmd->add_option("--report", report, "analyzer report (JSON array)")->required();
  triage_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  triage_cmd->add_option("--metadata", metadata, "package metadata (JSON lines)");
  triage_cmd->add_option("--recorded", recorded, "recorded fuzz outcomes (recorded backend)");
  triage_cmd->add_option("--templates", templates, "harness template directory (external backend)");
  triage_cmd->add_option("--out", out_path, "verdicts file to write")->required();

  auto* fuzz_cmd = app.add_subcommand("fuzz-validate", "run the fuzz backend on selected warnings");
  fuzz_cmd->add_option("--store", store, "warning store")->required();
  auto* ids_opt = fuzz_cmd->add_option("--ids", ids, "comma-separated warning ids");
  auto* ids_file_opt = fuzz_cmd->add_option("--ids-file", ids_file, "file with one warning id per line");
  ids_opt->excludes(ids_file_opt);
  fuzz_cmd->add_option("--recorded", recorded, "recorded fuzz outcomes (recorded backend)");
  fuzz_cmd->add_option("--templates", templates, "harness template directory (external backend)");
  fuzz_cmd->add_option("--out", out_path, "outcome file to write (recorded-outcome format)")->required();

  auto* importance = app.add_subcommand("importance", "permutation feature importance of a checkpoint");
  importance->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  importance->add_option("--store", store, "warning store")->required();
  importance->add_option("--splits", splits, "split file")->required();
  importance->add_option("--features", features, "feature file")->required();
  importance->add_option("--split", split_name, "train | val | test");
  importance->add_option("--out", out_path, "ranking file to write")->required();

  auto* report_cmd = app.add_subcommand("report", "recompute the metric report from a verdicts file");
  report_cmd->add_option("--verdicts", verdicts, "verdicts file")->required();
  report_cmd->add_option("--store", store, "labeled warning store");
  report_cmd->add_option("--labels", labels, "label file (JSON lines)");
  report_cmd->add_option("--out", out_path, "report file to write")->required();

  for (auto* cmd : {ingest, split, featurize, train_cmd, evaluate, triage_cmd, fuzz_cmd, importance, report_cmd}) {
    add_common(cmd, common);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    require_inputs({{"report", &report},
                    {"labels", &labels},
                    {"store", &store},
                    {"splits", &splits},
                    {"features", &features},
                    {"metadata", &metadata},
                    {"precomputed", &precomputed},
                    {"checkpoint", &checkpoint},
                    {"recorded", &recorded},
                    {"templates", &templates},
                    {"ids-file", &ids_file},
                    {"config", &common.config_file}});
    const RunConfig cfg = resolve_config(common);
    echo_digest(out, cfg);

    if (ingest->parsed()) {
      auto records = parse_report(read_file(report, "report"));
      std::size_t labeled = 0;
      if (!labels.empty()) labeled = attach_labels(records, parse_labels(read_file(labels, "labels")));
      assign_clusters(records, cfg.cluster_radius);
      std::set<int> clusters;
      for (const auto& r : records) clusters.insert(r.cluster_id.value_or(-1));
      write_file(out_path, serialize_store(records));
      out << "ingested " << records.size() << " warnings, " << labeled << " labeled, " << clusters.size()
          << " clusters\n";
    } else if (split->parsed()) {
      const auto records = load_store(store);
      const SplitAssignment a = stratified_split(records, cfg.ratios, cfg.seed);
      write_file(out_path, serialize_splits(a));
      out << "train=" << a.ids_in(Split::Train).size() << " val=" << a.ids_in(Split::Val).size()
          << " test=" << a.ids_in(Split::Test).size() << '\n';
    } else if (featurize->parsed()) {
      const auto records = load_store(store);
      std::vector<FeatureVector> sidecar;
      if (!precomputed.empty()) sidecar = parse_feature_sidecar(read_file(precomputed, "precomputed"));
      const auto vectors = featurize_records(records, load_metadata(metadata), precomputed.empty() ? nullptr : &sidecar);
      write_file(out_path, serialize_feature_sidecar(vectors));
      if (!manifest_path.empty()) write_file(manifest_path, FeatureManifest::standard().listing());
      out << "featurized " << vectors.size() << " warnings under manifest " << FeatureManifest::standard().digest()
          << '\n';
    } else if (train_cmd->parsed()) {
      const auto records = load_store(store);
      const auto assignment = parse_splits(read_file(splits, "splits"));
      const auto vectors = parse_feature_sidecar(read_file(features, "features"));
      const auto train_split = load_split(records, assignment, vectors, Split::Train);
      const auto val_split = load_split(records, assignment, vectors, Split::Val);
      const auto backends = make_backend(cfg, recorded, templates);
      std::string log;
      const auto ck = train(train_split, val_split, FeatureManifest::standard(), cfg.train, cfg.reward,
                            backends.backend.get(), [&](const EpochLog& e) {
                              log += format_epoch_log(e);
                              log += '\n';
                            });
      write_file(out_path, serialize_checkpoint(ck));
      if (!log_path.empty()) write_file(log_path, log);
      out << "trained " << ck.history.epochs_run << " epochs; best epoch " << ck.history.best_epoch
          << " val_f1=" << format_real(ck.history.best_val_f1) << '\n';
    } else if (evaluate->parsed()) {
      const auto ck = parse_checkpoint(read_file(checkpoint, "checkpoint"));
      const auto records = load_store(store);
      const auto assignment = parse_splits(read_file(splits, "splits"));
      const auto vectors = parse_feature_sidecar(read_file(features, "features"));
      const auto data = load_split(records, assignment, vectors, parse_split_flag(split_name));
      if (data.vectors.empty()) throw EmptySplit("split '" + split_name + "' is empty");
      const auto backends = make_backend(cfg, recorded, templates);
      const auto result = evaluate_checkpoint(ck, data, backends.backend.get(), common.jobs);
      write_file(out_path, format_report(result.report));
      if (!verdicts.empty()) write_file(verdicts, serialize_verdicts(result.verdicts));
      out << format_report(result.report);
    } else if (triage_cmd->parsed()) {
      const auto ck = parse_checkpoint(read_file(checkpoint, "checkpoint"));
      require_digest(ck, FeatureManifest::standard().digest());
      auto records = parse_report(read_file(report, "report"));
      assign_clusters(records, cfg.cluster_radius);
      const auto vectors = featurize_records(records, load_metadata(metadata), nullptr);
      LabeledVectors data;
      data.vectors = vectors;
      for (const auto& r : records) data.records.push_back(&r);
      const auto examples = prepare_examples(ck, data);
      const auto backends = make_backend(cfg, recorded, templates);
      EpisodeOptions options;
      options.backend = backends.backend.get();
      options.fuzz_budget = ck.config.fuzz_budget;
      options.reward = ck.reward;
      const auto result = evaluate_policy(ck.params, examples, options, common.jobs);
      write_file(out_path, serialize_verdicts(result));
      std::size_t tp = 0;
      for (const auto& v : result) tp += v.predicted == Label::TruePositive ? 1 : 0;
      out << "triaged " << result.size() << " warnings: " << tp << " tp, " << result.size() - tp << " fp\n";
    } else if (fuzz_cmd->parsed()) {
      if (cfg.backend == BackendKind::None) throw UsageError("fuzz-validate needs --backend other than none");
      std::vector<std::string> wanted;
      const std::string list = ids_file.empty() ? ids : read_file(ids_file, "ids-file");
      if (list.empty()) throw UsageError("fuzz-validate needs --ids or --ids-file");
      std::string token;
      for (char ch : list + "\n") {
        if (ch == ',' || ch == '\n' || ch == ' ' || ch == '\t' || ch == '\r') {
          if (!token.empty()) wanted.push_back(token);
          token.clear();
        } else {
          token += ch;
        }
      }
      const auto records = load_store(store);
      const auto by_id = index_records(records);
      const auto backends = make_backend(cfg, recorded, templates);
      std::vector<RecordedOutcome> outcomes;
      for (const auto& s : wanted) {
        auto id = parse_hex(s);
        if (!id) throw ValidationError("--ids: '" + s + "' is not a 64-bit hex warning id");
        auto it = by_id.find(*id);
        if (it == by_id.end()) throw ValidationError("--ids: warning " + s + " is not in the store");
        FuzzRequest req{*id, it->second, it->second->label, cfg.train.fuzz_budget, 0};
        FuzzOutcome o;
        try {
          o = backends.backend->run(req);
        } catch (const MissingRecording&) {
          throw;
        } catch (const std::exception& e) {
          o = {OutcomeKind::InfrastructureFailure, 0.0, e.what()};
        }
        out << s << ' ' << to_string(o.kind) << '\n';
        outcomes.push_back({*id, o});
      }
      write_file(out_path, serialize_recorded_outcomes(outcomes));
    } else if (importance->parsed()) {
      const auto ck = parse_checkpoint(read_file(checkpoint, "checkpoint"));
      const auto records = load_store(store);
      const auto assignment = parse_splits(read_file(splits, "splits"));
      const auto vectors = parse_feature_sidecar(read_file(features, "features"));
      const auto data = load_split(records, assignment, vectors, parse_split_flag(split_name));
      const auto ranking = permutation_importance(ck, data, FeatureManifest::standard(), cfg.importance_metric,
                                                  cfg.importance_repeats, cfg.seed);
      std::string text;
      for (std::size_t i = 0; i < ranking.size(); ++i) {
        text += std::to_string(i + 1) + '\t' + ranking[i].name + '\t' + format_real(ranking[i].mean_delta) + '\n';
      }
      write_file(out_path, text);
      for (std::size_t i = 0; i < std::min<std::size_t>(10, ranking.size()); ++i) {
        out << i + 1 << ' ' << ranking[i].name << ' ' << format_real(ranking[i].mean_delta) << '\n';
      }
    } else if (report_cmd->parsed()) {
      if (store.empty() == labels.empty()) throw UsageError("report needs exactly one of --store or --labels");
      std::map<WarningId, Label> truth;
      if (!store.empty()) {
        for (const auto& r : load_store(store)) {
          if (r.label) truth[r.id] = *r.label;
        }
      } else {
        for (const auto& l : parse_labels(read_file(labels, "labels"))) truth[l.id] = l.label;
      }
      const auto vs = parse_verdicts(read_file(verdicts, "verdicts"));
      std::vector<Label> ls;
      for (const auto& v : vs) {
        auto it = truth.find(v.id);
        if (it == truth.end()) throw UnlabeledRecordError(to_hex(v.id));
        ls.push_back(it->second);
      }
      const auto rep = compute_metrics(vs, ls);
      write_file(out_path, format_report(rep));
      out << format_report(rep);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (...) {
    err << "internal error: unknown exception\n";
    return kExitInternal;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace triage
