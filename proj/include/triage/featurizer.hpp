#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/warning_store.hpp"

namespace triage {

enum class FeatureFamily { MirSemantic, Structural, AnalysisSpecific };
enum class FeatureKind { Count, Ratio, Flag, OneHot, LogScaled };

std::string_view to_string(FeatureFamily family);
std::string_view to_string(FeatureKind kind);

struct FeatureEntry {
  std::string name;
  FeatureFamily family;
  FeatureKind kind;
};

class FeatureManifest {
 public:
  FeatureManifest(int version, std::vector<FeatureEntry> entries);

  // Version 1: the 87-slot manifest used by the heuristic extractor.
  static const FeatureManifest& standard();

  int version() const { return version_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<FeatureEntry>& entries() const { return entries_; }
  const FeatureEntry& operator[](std::size_t i) const { return entries_[i]; }

  // 16 hex digits; FNV-1a over version and every (name, family, kind).
  const std::string& digest() const { return digest_; }

  std::optional<std::size_t> index_of(std::string_view name) const;

  // "index\tname\tfamily\tkind" lines, preceded by a version/digest header.
  std::string listing() const;

 private:
  int version_;
  std::vector<FeatureEntry> entries_;
  std::string digest_;
};

inline constexpr std::size_t kStandardFeatureCount = 87;

struct FeatureVector {
  WarningId warning_id = 0;
  std::vector<double> values;
  std::string manifest_digest;
};

// Throws ValidationError on NaN/inf, out-of-range flags/ratios or a length
// different from the manifest.
void validate_vector(const FeatureVector& vector, const FeatureManifest& manifest);

struct PackageMetadata {
  std::string name;
  std::optional<std::uint64_t> download_count;
  std::optional<double> unsafe_prevalence;
  std::optional<std::uint64_t> total_loc;
};

// "aarc-0.3.2/src/smart_ptrs.rs" -> "aarc".
std::string package_name_from_path(std::string_view file);

// Context that needs more than one record.
struct AnalysisContext {
  std::optional<int> cluster_size;
};

enum class ExtractionMode { Heuristic, Precomputed };

inline constexpr std::size_t kMaxSnippetBytes = 1u << 20;

// Heuristic mode derives snippet features lexically and fills package and
// analyzer features from the inputs; missing inputs fall back to 0 (counts,
// flags) or 0.5 (ratios) with the matching *_imputed flag set. Precomputed
// mode validates `sidecar` against the manifest and returns it unchanged.
FeatureVector extract_features(const WarningRecord& record, const std::optional<PackageMetadata>& meta,
                               const AnalysisContext& context,
                               const FeatureVector* sidecar = nullptr,
                               ExtractionMode mode = ExtractionMode::Heuristic,
                               const FeatureManifest& manifest = FeatureManifest::standard());

struct NormalizerStats {
  std::vector<double> mean;
  std::vector<double> sd;
  // 1 for one-hot columns, which are never z-scored.
  std::vector<std::uint8_t> passthrough;
  Split fitted_on = Split::Train;
  std::string manifest_digest;
};

// Sample mean and standard deviation (ddof = 1) per column.
NormalizerStats fit_normalizer(std::span<const FeatureVector> train_vectors,
                               const FeatureManifest& manifest = FeatureManifest::standard());

// (x - mean) / sd, or 0 where sd == 0; passthrough columns are copied.
FeatureVector normalize(const FeatureVector& vector, const NormalizerStats& stats);

// Sidecar file: one {"warning_id","manifest_digest","values"} object per line.
std::string serialize_feature_sidecar(std::span<const FeatureVector> vectors);
std::vector<FeatureVector> parse_feature_sidecar(std::string_view content);

// Package metadata file: one {"package","download_count","unsafe_prevalence","total_loc"} per line.
std::vector<PackageMetadata> parse_package_metadata(std::string_view content);

}  // namespace triage
