#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "triage/checkpoint.hpp"
#include "triage/evaluator.hpp"
#include "triage/fuzz_backend.hpp"
#include "triage/warning_store.hpp"

namespace triage {

enum class BackendKind { None, Simulated, Recorded, External };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> parse_backend_kind(std::string_view s);

// Everything a subcommand needs besides its file paths. Serialized as flat
// "key = value" lines; see config_keys() for the schema.
struct RunConfig {
  std::uint64_t seed = 0;
  BackendKind backend = BackendKind::None;
  SplitRatios ratios{0.70, 0.15, 0.15};
  int cluster_radius = kDefaultClusterRadius;
  TrainConfig train;
  RewardSpec reward;
  SimOracleConfig sim;
  ExternalConfig external;
  int importance_repeats = 5;
  ImportanceMetric importance_metric = ImportanceMetric::F1;
  // Paths keyed by flag name (report, labels, store, ...); not part of the digest.
  std::map<std::string, std::string> paths;

  // Applies one key; throws ValidationError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Seeds derived fields (train.seed, sim.seed) from `seed`, then validates.
  void finalize();

  // Canonical "key=value" listing of every parameter in schema order.
  std::string canonical() const;
  // FNV-1a over canonical(), 16 hex digits.
  std::string digest() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};

const std::vector<ConfigKey>& config_keys();

// Parses a config file: "key = value" lines, '#' comments, blank lines.
// Throws ValidationError naming the line on malformed input.
void apply_config_text(RunConfig& config, std::string_view text);

}  // namespace triage
