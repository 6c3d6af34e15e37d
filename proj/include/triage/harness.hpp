#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "triage/bug_pattern.hpp"
#include "triage/warning_store.hpp"

namespace triage {

// Placeholders: {{package}}, {{function}}, {{type_args}}, {{entry}}.
struct HarnessTemplate {
  BugPattern pattern = BugPattern::Unknown;
  std::string text;
};

class TemplateSet {
 public:
  // The built-in libFuzzer templates for the three bug patterns.
  static TemplateSet builtin();
  // Reads panic_safety.rs.tmpl, higher_order_invariant.rs.tmpl and
  // send_sync_variance.rs.tmpl from `dir`; missing files fall back to the
  // built-in template.
  static TemplateSet load(const std::filesystem::path& dir);

  const HarnessTemplate* find(BugPattern pattern) const;
  void set(HarnessTemplate tmpl);

 private:
  std::map<BugPattern, HarnessTemplate> templates_;
};

struct HarnessTarget {
  std::string package;    // crate name as a Rust identifier
  std::string function;   // flagged function (or impl type for destructors)
  std::string entry;      // path used to reach the target, e.g. "Arc::drop"
  std::size_t generic_count = 0;
};

// Turbofish with every type parameter bound to the pattern's probe type
// (u8, Fickle or Probe), e.g. "::<u8, u8>"; empty when not generic.
std::string probe_type_args(BugPattern pattern, std::size_t generic_count);

// Recovers the callable target from the description and snippet. Throws
// UnresolvableTarget when neither names a function or an impl'd type.
HarnessTarget resolve_target(const WarningRecord& warning);

// Substitutes every {{key}}; throws ValidationError if any placeholder is left.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& bindings);

// Throws UnknownPattern when the warning has no template, UnresolvableTarget
// when no entry point can be extracted.
std::string generate_harness(const WarningRecord& warning, const TemplateSet& templates);

}  // namespace triage
