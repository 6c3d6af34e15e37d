#include "triage/warning_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/random.hpp"

namespace triage {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Level level) {
  switch (level) {
    case Level::Error: return "Error";
    case Level::Warning: return "Warning";
    case Level::Info: return "Info";
  }
  return "Warning";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::string_view label_code(Label label) { return label == Label::TruePositive ? "tp" : "fp"; }

std::optional<Label> parse_label_code(std::string_view s) {
  if (s == "tp") return Label::TruePositive;
  if (s == "fp") return Label::FalsePositive;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

bool SourceSpan::valid() const {
  if (start_line < 1 || start_col < 1 || end_line < 1 || end_col < 1) return false;
  if (start_line > end_line) return false;
  if (start_line == end_line && start_col > end_col) return false;
  return true;
}

std::string WarningRecord::id_hex() const { return to_hex(id); }

WarningId compute_warning_id(std::string_view file, const SourceSpan& span,
                             std::string_view analyzer, std::string_view description) {
  return StableHasher{}
      .field(file)
      .field(span.start_line)
      .field(span.start_col)
      .field(span.end_line)
      .field(span.end_col)
      .field(analyzer)
      .field(description)
      .digest();
}

namespace {

constexpr std::array<std::string_view, 10> kReportKeys = {
    "level",    "analyzer",  "op_type", "description", "file",
    "start_line", "start_col", "end_line", "end_col",   "code_snippet"};

const json& require(const json& obj, std::size_t index, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(index, key, "is missing");
  return *it;
}

std::string require_string(const json& obj, std::size_t index, const char* key) {
  const json& v = require(obj, index, key);
  if (!v.is_string()) throw SchemaError(index, key, "must be a string");
  return v.get<std::string>();
}

int require_coordinate(const json& obj, std::size_t index, const char* key) {
  const json& v = require(obj, index, key);
  if (!v.is_number_integer()) throw SchemaError(index, key, "must be an integer");
  const auto n = v.get<std::int64_t>();
  if (n < 1 || n > INT32_MAX) throw SchemaError(index, key, "must be a 1-based line/column");
  return static_cast<int>(n);
}

Level parse_level(const json& obj, std::size_t index) {
  const std::string s = require_string(obj, index, "level");
  if (s == "Error") return Level::Error;
  if (s == "Warning") return Level::Warning;
  if (s == "Info") return Level::Info;
  throw SchemaError(index, "level", "must be one of Error, Warning, Info (got '" + s + "')");
}

WarningRecord record_from_json(const json& obj, std::size_t index) {
  if (!obj.is_object()) throw SchemaError(index, "<record>", "must be an object");
  WarningRecord r;
  r.level = parse_level(obj, index);
  r.analyzer = require_string(obj, index, "analyzer");
  const json& op = require(obj, index, "op_type");
  if (op.is_string()) {
    r.op_type = op.get<std::string>();
  } else if (!op.is_null()) {
    throw SchemaError(index, "op_type", "must be a string or null");
  }
  r.description = require_string(obj, index, "description");
  r.file = require_string(obj, index, "file");
  r.span.start_line = require_coordinate(obj, index, "start_line");
  r.span.start_col = require_coordinate(obj, index, "start_col");
  r.span.end_line = require_coordinate(obj, index, "end_line");
  r.span.end_col = require_coordinate(obj, index, "end_col");
  if (!r.span.valid()) throw SchemaError(index, "end_line", "span ends before it starts");
  r.code_snippet = require_string(obj, index, "code_snippet");
  r.id = compute_warning_id(r.file, r.span, r.analyzer, r.description);
  return r;
}

ordered_json report_object(const WarningRecord& r) {
  ordered_json o;
  o["level"] = std::string(to_string(r.level));
  o["analyzer"] = r.analyzer;
  o["op_type"] = r.op_type ? ordered_json(*r.op_type) : ordered_json(nullptr);
  o["description"] = r.description;
  o["file"] = r.file;
  o["start_line"] = r.span.start_line;
  o["start_col"] = r.span.start_col;
  o["end_line"] = r.span.end_line;
  o["end_col"] = r.span.end_col;
  o["code_snippet"] = r.code_snippet;
  return o;
}

json parse_json(std::string_view content, const char* what) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::vector<std::string_view> nonblank_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

WarningId require_hex_id(const json& obj, std::size_t index, const char* key) {
  const std::string s = require_string(obj, index, key);
  auto id = parse_hex(s);
  if (!id) throw SchemaError(index, key, "must be a 64-bit hex id (got '" + s + "')");
  return *id;
}

}  // namespace

std::vector<WarningRecord> parse_report(std::string_view content) {
  const json doc = parse_json(content, "report");
  if (!doc.is_array()) throw SchemaError(0, "<document>", "must be a JSON array of report objects");
  std::vector<WarningRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    if (obj.is_object()) {
      for (const auto& [key, _] : obj.items()) {
        if (std::find(kReportKeys.begin(), kReportKeys.end(), key) == kReportKeys.end()) {
          throw SchemaError(i, key, "is not a report field");
        }
      }
    }
    out.push_back(record_from_json(obj, i));
  }
  return out;
}

std::string serialize_report(std::span<const WarningRecord> records) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : records) arr.push_back(report_object(r));
  return arr.dump(2) + "\n";
}

std::string serialize_store(std::span<const WarningRecord> records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json o;
    o["id"] = r.id_hex();
    const ordered_json fields = report_object(r);
    for (const auto& [k, v] : fields.items()) o[k] = v;
    o["label"] = r.label ? ordered_json(std::string(label_code(*r.label))) : ordered_json(nullptr);
    o["cluster_id"] = r.cluster_id ? ordered_json(*r.cluster_id) : ordered_json(nullptr);
    out += o.dump();
    out += '\n';
  }
  return out;
}

std::vector<WarningRecord> parse_store(std::string_view content) {
  std::vector<WarningRecord> out;
  const auto lines = nonblank_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json obj = parse_json(lines[i], "warning store line");
    if (!obj.is_object()) throw SchemaError(i, "<record>", "must be an object");
    json report = obj;
    report.erase("id");
    report.erase("label");
    report.erase("cluster_id");
    WarningRecord r = record_from_json(report, i);
    const WarningId stored = require_hex_id(obj, i, "id");
    if (stored != r.id) {
      throw SchemaError(i, "id", "does not match the record contents (" + to_hex(stored) +
                                     " vs " + r.id_hex() + ")");
    }
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      auto label = it->is_string() ? parse_label_code(it->get<std::string>()) : std::nullopt;
      if (!label) throw SchemaError(i, "label", "must be \"tp\", \"fp\" or null");
      r.label = label;
    }
    if (auto it = obj.find("cluster_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw SchemaError(i, "cluster_id", "must be an integer");
      r.cluster_id = it->get<int>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabelEntry> parse_labels(std::string_view content) {
  std::vector<LabelEntry> out;
  const auto lines = nonblank_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json obj = parse_json(lines[i], "label line");
    if (!obj.is_object()) throw SchemaError(i, "<label>", "must be an object");
    LabelEntry e;
    e.id = require_hex_id(obj, i, "warning_id");
    const std::string code = require_string(obj, i, "label");
    auto label = parse_label_code(code);
    if (!label) throw SchemaError(i, "label", "must be \"tp\" or \"fp\" (got '" + code + "')");
    e.label = *label;
    if (auto it = obj.find("source"); it != obj.end() && it->is_string()) e.source = it->get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

std::string serialize_labels(std::span<const LabelEntry> labels) {
  std::string out;
  for (const auto& e : labels) {
    ordered_json o;
    o["warning_id"] = to_hex(e.id);
    o["label"] = std::string(label_code(e.label));
    o["source"] = e.source;
    out += o.dump();
    out += '\n';
  }
  return out;
}

std::size_t attach_labels(std::vector<WarningRecord>& records, std::span<const LabelEntry> labels) {
  std::map<WarningId, Label> by_id;
  for (const auto& e : labels) by_id[e.id] = e.label;
  std::size_t matched = 0;
  for (auto& r : records) {
    if (auto it = by_id.find(r.id); it != by_id.end()) {
      r.label = it->second;
      ++matched;
    }
  }
  return matched;
}

std::vector<WarningId> SplitAssignment::ids_in(Split split) const {
  std::vector<WarningId> ids;
  for (const auto& [id, s] : assignment) {
    if (s == split) ids.push_back(id);
  }
  return ids;
}

namespace {

// Largest-remainder apportionment of `total` items by `ratios`; remainder ties
// go to the earlier split.
std::array<std::size_t, 3> apportion(std::size_t total, const SplitRatios& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double quota = ratios[s] * static_cast<double>(total);
    // Guard against 0.15 * 100 = 15.000000000000002 style representation noise.
    const double floored = std::floor(quota + 1e-9);
    counts[s] = static_cast<std::size_t>(floored);
    remainders[s] = std::max(0.0, quota - floored);
    assigned += counts[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-12; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % 3) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

}  // namespace

SplitAssignment stratified_split(std::span<const WarningRecord> records, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw RatioError("every split ratio must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "split ratios must sum to 1 (got " << sum << ")";
    throw RatioError(msg.str());
  }

  // Per class, the positions (in input order) of its records.
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label) throw UnlabeledRecordError(records[i].id_hex());
    by_class[*records[i].label == Label::TruePositive ? 0 : 1].push_back(i);
  }

  Rng rng(seed);
  // cells[split][class] -> record positions
  std::array<std::array<std::vector<std::size_t>, 2>, 3> cells;
  for (std::size_t c = 0; c < 2; ++c) {
    auto members = by_class[c];
    rng.shuffle(members);
    const auto counts = apportion(members.size(), ratios);
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) cells[s][c].push_back(members[cursor++]);
    }
  }

  // Small datasets can leave a split empty; borrow from the largest split,
  // picking the class that keeps the donor's class fraction closest to global.
  const double global_pos =
      records.empty() ? 0.0 : static_cast<double>(by_class[0].size()) / static_cast<double>(records.size());
  if (records.size() >= 3) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (!cells[s][0].empty() || !cells[s][1].empty()) continue;
      std::size_t donor = 0;
      auto size_of = [&](std::size_t d) { return cells[d][0].size() + cells[d][1].size(); };
      for (std::size_t d = 1; d < 3; ++d) {
        if (size_of(d) > size_of(donor)) donor = d;
      }
      const double drift = static_cast<double>(cells[donor][0].size()) -
                           global_pos * static_cast<double>(size_of(donor));
      std::size_t cls = drift >= 0.0 ? 0 : 1;
      if (cells[donor][cls].empty()) cls = 1 - cls;
      cells[s][cls].push_back(cells[donor][cls].back());
      cells[donor][cls].pop_back();
    }
  }

  SplitAssignment out;
  out.ratios = ratios;
  out.seed = seed;
  constexpr std::array<Split, 3> kSplits = {Split::Train, Split::Val, Split::Test};
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& cell : cells[s]) {
      for (std::size_t pos : cell) out.assignment[records[pos].id] = kSplits[s];
    }
  }
  return out;
}

std::string serialize_splits(const SplitAssignment& splits) {
  ordered_json header;
  header["seed"] = splits.seed;
  header["ratios"] = {splits.ratios[0], splits.ratios[1], splits.ratios[2]};
  std::string out = header.dump() + "\n";
  for (const auto& [id, split] : splits.assignment) {
    ordered_json o;
    o["warning_id"] = to_hex(id);
    o["split"] = std::string(to_string(split));
    out += o.dump();
    out += '\n';
  }
  return out;
}

SplitAssignment parse_splits(std::string_view content) {
  const auto lines = nonblank_lines(content);
  if (lines.empty()) throw SchemaError(0, "<header>", "split file has no header line");
  SplitAssignment out;
  const json header = parse_json(lines[0], "split header");
  if (!header.is_object() || !header.contains("seed") || !header["seed"].is_number_integer()) {
    throw SchemaError(0, "seed", "split header must record an integer seed");
  }
  out.seed = header["seed"].get<std::uint64_t>();
  const json& ratios = header.value("ratios", json());
  if (!ratios.is_array() || ratios.size() != 3) {
    throw SchemaError(0, "ratios", "split header must record three ratios");
  }
  for (std::size_t s = 0; s < 3; ++s) out.ratios[s] = ratios[s].get<double>();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json obj = parse_json(lines[i], "split line");
    const WarningId id = require_hex_id(obj, i, "warning_id");
    const std::string name = require_string(obj, i, "split");
    auto split = parse_split(name);
    if (!split) throw SchemaError(i, "split", "must be train, val or test (got '" + name + "')");
    if (!out.assignment.emplace(id, *split).second) {
      throw SchemaError(i, "warning_id", "appears in more than one split line");
    }
  }
  return out;
}

std::vector<int> cluster_indices(std::span<const WarningRecord> records, int radius) {
  const std::size_t n = records.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  // In one dimension, single linkage only needs neighbours in sorted order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].file != records[b].file) return records[a].file < records[b].file;
    if (records[a].span.start_line != records[b].span.start_line) {
      return records[a].span.start_line < records[b].span.start_line;
    }
    return a < b;
  });
  for (std::size_t k = 1; k < n; ++k) {
    const auto& prev = records[order[k - 1]];
    const auto& cur = records[order[k]];
    if (prev.file == cur.file &&
        static_cast<long>(cur.span.start_line) - prev.span.start_line <= radius) {
      parent[find(order[k])] = find(order[k - 1]);
    }
  }

  std::map<std::size_t, int> dense;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    auto [it, inserted] = dense.emplace(root, static_cast<int>(dense.size()));
    out[i] = it->second;
  }
  return out;
}

std::map<WarningId, int> cluster_warnings(std::span<const WarningRecord> records, int radius) {
  std::map<WarningId, int> out;
  const auto clusters = cluster_indices(records, std::max(radius, 0));
  for (std::size_t i = 0; i < records.size(); ++i) out.emplace(records[i].id, clusters[i]);
  return out;
}

void assign_clusters(std::vector<WarningRecord>& records, int radius) {
  const auto clusters = cluster_indices(records, std::max(radius, 0));
  for (std::size_t i = 0; i < records.size(); ++i) records[i].cluster_id = clusters[i];
}

}  // namespace triage
