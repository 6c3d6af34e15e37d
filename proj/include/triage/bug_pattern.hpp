#pragma once

#include <optional>
#include <string_view>

#include "triage/warning_store.hpp"

namespace triage {

// The three unsafe-code bug classes plus a catch-all for analyzers that do
// not map onto one of them.
enum class BugPattern { PanicSafety, HigherOrderInvariant, SendSyncVariance, Unknown };

std::string_view to_string(BugPattern pattern);
std::optional<BugPattern> parse_bug_pattern(std::string_view s);

// SendSyncVariance checker -> SendSyncVariance; UnsafeDestructor ->
// HigherOrderInvariant; UnsafeDataflow -> PanicSafety when the description or
// op_type mentions a panic, or the snippet takes a closure (Fn/FnMut/FnOnce),
// otherwise HigherOrderInvariant; anything else -> Unknown.
BugPattern infer_bug_pattern(const WarningRecord& record);

}  // namespace triage
