#include "triage/bug_pattern.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>

namespace triage {

std::string_view to_string(BugPattern pattern) {
  switch (pattern) {
    case BugPattern::PanicSafety: return "panic_safety";
    case BugPattern::HigherOrderInvariant: return "higher_order_invariant";
    case BugPattern::SendSyncVariance: return "send_sync_variance";
    case BugPattern::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<BugPattern> parse_bug_pattern(std::string_view s) {
  for (auto p : {BugPattern::PanicSafety, BugPattern::HigherOrderInvariant,
                 BugPattern::SendSyncVariance, BugPattern::Unknown}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

BugPattern infer_bug_pattern(const WarningRecord& record) {
  const std::string analyzer = lower(record.analyzer);
  if (analyzer.find("sendsync") != std::string::npos) return BugPattern::SendSyncVariance;
  if (analyzer == "unsafedestructor") return BugPattern::HigherOrderInvariant;
  if (analyzer != "unsafedataflow") return BugPattern::Unknown;

  const std::string context = lower(record.description) + " " + lower(record.op_type.value_or(""));
  if (context.find("panic") != std::string::npos) return BugPattern::PanicSafety;
  if (context.find("higher") != std::string::npos || context.find("invariant") != std::string::npos) {
    return BugPattern::HigherOrderInvariant;
  }
  static const std::regex closure_bound(R"(\bFn(Mut|Once)?\s*\()");
  if (std::regex_search(record.code_snippet, closure_bound)) return BugPattern::PanicSafety;
  return BugPattern::HigherOrderInvariant;
}

}  // namespace triage
