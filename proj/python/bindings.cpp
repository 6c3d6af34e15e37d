#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "triage/cli.hpp"
#include "triage/config.hpp"
#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/synthetic.hpp"
#include "triage/trainer.hpp"

namespace py = pybind11;
using namespace triage;

namespace {

Label label_from(const std::string& s) {
  auto l = parse_label_code(s);
  if (!l) throw ValidationError("label must be \"tp\" or \"fp\", got '" + s + "'");
  return *l;
}

std::vector<Label> labels_from(const std::vector<std::string>& codes) {
  std::vector<Label> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(label_from(c));
  return out;
}

std::optional<OutcomeKind> outcome_from(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  auto k = parse_outcome_kind(*s);
  if (!k) throw ValidationError("unknown fuzz outcome '" + *s + "'");
  return k;
}

TriageAction action_from(const std::string& s) {
  for (auto a : kAllActions) {
    if (to_string(a) == s) return a;
  }
  throw ValidationError("unknown action '" + s + "'");
}

py::object metric(const Metric& m) { return m.value ? py::object(py::float_(*m.value)) : py::object(py::none()); }

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["n"] = r.n;
  d["tp"] = r.tp;
  d["fp"] = r.fp;
  d["fn"] = r.fn;
  d["tn"] = r.tn;
  d["accuracy"] = r.accuracy;
  d["precision"] = metric(r.precision);
  d["recall"] = metric(r.recall);
  d["f1"] = metric(r.f1);
  d["mcc"] = r.mcc;
  d["auc_roc"] = metric(r.auc_roc);
  d["auc_pr"] = metric(r.auc_pr);
  d["fuzz_invocation_rate"] = r.fuzz_invocation_rate;
  return d;
}

py::dict record_dict(const WarningRecord& r) {
  py::dict d;
  d["id"] = r.id_hex();
  d["analyzer"] = r.analyzer;
  d["op_type"] = r.op_type ? py::object(py::str(*r.op_type)) : py::object(py::none());
  d["description"] = r.description;
  d["file"] = r.file;
  d["start_line"] = r.span.start_line;
  d["end_line"] = r.span.end_line;
  d["label"] = r.label ? py::object(py::str(std::string(label_code(*r.label)))) : py::object(py::none());
  d["cluster_id"] = r.cluster_id ? py::object(py::int_(*r.cluster_id)) : py::object(py::none());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Warning triage engine: store, features, policy, training and evaluation";

  py::register_exception<Error>(m, "EngineError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("fnv1a64_hex", [](const std::string& s) { return to_hex(fnv1a64(s)); }, py::arg("data"));

  m.def(
      "parse_report",
      [](const std::string& content) {
        py::list out;
        for (const auto& r : parse_report(content)) out.append(record_dict(r));
        return out;
      },
      py::arg("content"), "Parse an analyzer report (JSON array) into record dicts.");

  m.def(
      "feature_names",
      [] {
        std::vector<std::string> names;
        for (const auto& e : FeatureManifest::standard().entries()) names.push_back(e.name);
        return names;
      },
      "Names of the standard feature manifest, in slot order.");
  m.def("manifest_digest", [] { return FeatureManifest::standard().digest(); });

  m.def(
      "extract_features",
      [](const std::string& report_json, std::size_t index) {
        const auto records = parse_report(report_json);
        if (index >= records.size()) throw ValidationError("record index out of range");
        return extract_features(records[index], std::nullopt, AnalysisContext{}).values;
      },
      py::arg("report_json"), py::arg("index") = 0,
      "Heuristic feature vector of one record of a report, without package metadata.");

  m.def(
      "reward",
      [](const std::string& action, const std::string& label, const std::optional<std::string>& prior) {
        return reward_of(action_from(action), label_from(label), outcome_from(prior));
      },
      py::arg("action"), py::arg("label"), py::arg("prior_fuzz") = py::none(),
      "Reward for an action ('classify_tp', 'classify_fp', 'fuzz') under the default constants.");

  m.def(
      "simulate_outcome",
      [](double p_tp, double p_fp, double p_inc, std::uint64_t seed, std::uint64_t id, const std::string& label,
         std::uint64_t draw) {
        SimOracleConfig cfg{p_tp, p_fp, p_inc, seed};
        cfg.validate();
        return std::string(to_string(simulate_outcome(cfg, id, label_from(label), draw).kind));
      },
      py::arg("p_crash_given_tp"), py::arg("p_crash_given_fp"), py::arg("p_inconclusive"), py::arg("seed"),
      py::arg("warning_id"), py::arg("label"), py::arg("draw") = 0);

  m.def(
      "compute_metrics",
      [](const std::vector<std::string>& predicted, const std::vector<double>& scores,
         const std::vector<std::string>& labels) {
        if (predicted.size() != scores.size()) throw ValidationError("predicted and scores differ in length");
        std::vector<Verdict> verdicts(predicted.size());
        for (std::size_t i = 0; i < predicted.size(); ++i) {
          verdicts[i].id = i + 1;
          verdicts[i].predicted = label_from(predicted[i]);
          verdicts[i].score = scores[i];
        }
        return report_dict(compute_metrics(verdicts, labels_from(labels)));
      },
      py::arg("predicted"), py::arg("scores"), py::arg("labels"),
      "Seven-metric report; undefined metrics are None.");

  m.def(
      "train_synthetic",
      [](std::uint64_t seed, int epochs_max, int hidden1, int hidden2, double learning_rate) {
        const auto task = synthetic::separable(seed);
        TrainConfig c;
        c.seed = seed;
        c.epochs_max = epochs_max;
        c.hidden1 = hidden1;
        c.hidden2 = hidden2;
        c.learning_rate = learning_rate;
        PolicyCheckpoint ck;
        {
          py::gil_scoped_release release;
          ck = train(task.train, task.val, task.manifest, c, RewardSpec{}, nullptr);
        }
        py::dict d;
        d["checkpoint"] = serialize_checkpoint(ck);
        d["epochs_run"] = ck.history.epochs_run;
        d["best_epoch"] = ck.history.best_epoch;
        d["test"] = report_dict(evaluate_checkpoint(ck, task.test, nullptr).report);
        return d;
      },
      py::arg("seed") = 7, py::arg("epochs_max") = 50, py::arg("hidden1") = 256, py::arg("hidden2") = 128,
      py::arg("learning_rate") = 3e-4, "Train on the synthetic separable task; returns the checkpoint text and test report.");

  m.def(
      "config_digest",
      [](const std::map<std::string, std::string>& overrides) {
        RunConfig cfg;
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        cfg.finalize();
        return cfg.digest();
      },
      py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one CLI invocation in-process; returns (exit_code, stdout, stderr).");
}
