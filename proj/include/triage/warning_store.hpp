#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace triage {

enum class Level { Error, Warning, Info };
enum class Label { TruePositive, FalsePositive };
enum class Split { Train, Val, Test };

std::string_view to_string(Level level);
std::string_view to_string(Split split);
// "tp" / "fp", the sidecar spelling.
std::string_view label_code(Label label);
std::optional<Label> parse_label_code(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

using WarningId = std::uint64_t;

struct SourceSpan {
  int start_line = 1;
  int start_col = 1;
  int end_line = 1;
  int end_col = 1;

  bool valid() const;
};

struct WarningRecord {
  WarningId id = 0;
  Level level = Level::Warning;
  std::string analyzer;
  std::optional<std::string> op_type;
  std::string description;
  std::string file;
  SourceSpan span;
  std::string code_snippet;
  std::optional<Label> label;
  std::optional<int> cluster_id;

  std::string id_hex() const;
};

// Stable 64-bit identity: FNV-1a over file, the four span coordinates,
// analyzer and description, each followed by a 0x1f separator.
WarningId compute_warning_id(std::string_view file, const SourceSpan& span,
                             std::string_view analyzer, std::string_view description);

// Parses an analyzer report (JSON array of objects with the ten report keys).
// Throws SchemaError naming the first bad field and its array index.
std::vector<WarningRecord> parse_report(std::string_view content);

// Inverse of parse_report; labels and cluster ids are not part of the report.
std::string serialize_report(std::span<const WarningRecord> records);

// Store file: one JSON object per line carrying the report fields plus
// "id", "label" and "cluster_id".
std::string serialize_store(std::span<const WarningRecord> records);
std::vector<WarningRecord> parse_store(std::string_view content);

struct LabelEntry {
  WarningId id = 0;
  Label label = Label::FalsePositive;
  std::string source;
};

std::vector<LabelEntry> parse_labels(std::string_view content);
std::string serialize_labels(std::span<const LabelEntry> labels);

// Sets record.label for every record with an entry; returns how many matched.
std::size_t attach_labels(std::vector<WarningRecord>& records, std::span<const LabelEntry> labels);

using SplitRatios = std::array<double, 3>;

struct SplitAssignment {
  std::map<WarningId, Split> assignment;
  SplitRatios ratios{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;

  std::vector<WarningId> ids_in(Split split) const;
};

struct Dataset {
  std::vector<WarningRecord> records;
  SplitAssignment splits;
};

// Largest-remainder apportionment of each class over the three splits, then a
// seeded shuffle within each class. Deterministic for a fixed seed.
SplitAssignment stratified_split(std::span<const WarningRecord> records, const SplitRatios& ratios,
                                 std::uint64_t seed);

std::string serialize_splits(const SplitAssignment& splits);
SplitAssignment parse_splits(std::string_view content);

inline constexpr int kDefaultClusterRadius = 10;

// Single-linkage clustering of same-file warnings whose start lines are within
// `radius`. Cluster ids are dense and ordered by first appearance.
std::map<WarningId, int> cluster_warnings(std::span<const WarningRecord> records,
                                          int radius = kDefaultClusterRadius);

// Index-based variant; handles duplicate ids by position.
std::vector<int> cluster_indices(std::span<const WarningRecord> records, int radius);

// Applies cluster_indices to the records in place.
void assign_clusters(std::vector<WarningRecord>& records, int radius = kDefaultClusterRadius);

}  // namespace triage
