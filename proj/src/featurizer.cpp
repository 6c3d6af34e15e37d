#include "triage/featurizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "triage/bug_pattern.hpp"
#include "triage/error.hpp"
#include "triage/hash.hpp"

namespace triage {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(FeatureFamily family) {
  switch (family) {
    case FeatureFamily::MirSemantic: return "mir_semantic";
    case FeatureFamily::Structural: return "structural";
    case FeatureFamily::AnalysisSpecific: return "analysis_specific";
  }
  return "mir_semantic";
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Count: return "count";
    case FeatureKind::Ratio: return "ratio";
    case FeatureKind::Flag: return "flag";
    case FeatureKind::OneHot: return "categorical-one-hot";
    case FeatureKind::LogScaled: return "log-scaled";
  }
  return "count";
}

FeatureManifest::FeatureManifest(int version, std::vector<FeatureEntry> entries)
    : version_(version), entries_(std::move(entries)) {
  std::set<std::string> seen;
  StableHasher h;
  h.field(version_);
  for (const auto& e : entries_) {
    if (!seen.insert(e.name).second) throw ValidationError("duplicate feature name: " + e.name);
    h.field(e.name).field(to_string(e.family)).field(to_string(e.kind));
  }
  digest_ = to_hex(h.digest());
}

std::optional<std::size_t> FeatureManifest::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::string FeatureManifest::listing() const {
  std::ostringstream out;
  out << "# feature manifest version " << version_ << " digest " << digest_ << " entries "
      << entries_.size() << "\n";
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    out << i << '\t' << entries_[i].name << '\t' << to_string(entries_[i].family) << '\t'
        << to_string(entries_[i].kind) << '\n';
  }
  return out.str();
}

namespace {

using F = FeatureFamily;
using K = FeatureKind;

// Slot order is part of the manifest; append-only edits must bump the version.
enum Slot : std::size_t {
  // MIR-level semantics approximated from the snippet.
  kGenericParamCount,
  kTraitBoundFlag,
  kTraitBoundCount,
  kGenericNestingDepth,
  kLifetimeParamCount,
  kStaticLifetimeFlag,
  kWhereClauseFlag,
  kBorrowRatio,
  kMutBorrowRatio,
  kBorrowNestingDepth,
  kSmartPointerFlag,
  kSmartPointerCount,
  kRawPointerCount,
  kMoveClosureFlag,
  kCyclomaticComplexity,
  kCyclomaticComplexityLog,
  kLoopNestingDepth,
  kLoopCount,
  kPanicPathCount,
  kUnwrapCount,
  kMaxBraceDepth,
  kEarlyReturnCount,
  kMatchArmCount,
  kUnsafeBlockCount,
  kUnsafeFnFlag,
  kBypassPanicSafety,
  kBypassHigherOrderInvariant,
  kBypassSendSyncVariance,
  kBypassUnknown,
  kBypassToDangerDistance,
  kBypassToDangerDistanceLog,
  kBypassOpCount,
  kDangerCallCount,
  kSetLenFlag,
  kPtrReadWriteCount,
  kTransmuteFlag,
  kUninitFlag,
  kMemForgetFlag,
  kFromRawFlag,
  kClosureBoundFlag,
  kDropImplFlag,
  kUnsafeImplSendSyncFlag,
  kPhantomDataFlag,
  // Package and module structure.
  kPackageDownloadsLog,
  kPackageDownloadsImputed,
  kPackageUnsafePrevalence,
  kPackageUnsafePrevalenceImputed,
  kPackageTotalLocLog,
  kPackageTotalLocImputed,
  kPublicApiFlag,
  kLinesOfCode,
  kLinesOfCodeLog,
  kParameterCount,
  kSelfParamFlag,
  kCommentDensity,
  kSnippetCharCountLog,
  kIdentifierCount,
  kUniqueIdentifierRatio,
  kFilePathDepth,
  kTestPathFlag,
  kExampleOrBenchPathFlag,
  kImplBlockFlag,
  kTraitImplFlag,
  kMacroInvocationCount,
  kSpanLineCount,
  kSpanColWidth,
  kSnippetElidedFlag,
  // Analyzer-derived.
  kCheckerUnsafeDataflow,
  kCheckerSendSyncVariance,
  kCheckerUnsafeDestructor,
  kCheckerOther,
  kPrecisionHigh,
  kPrecisionMed,
  kPrecisionLow,
  kPrecisionScore,
  kOpTypePresent,
  kClusterSize,
  kClusterSizeLog,
  kClusteredFlag,
  kClusterImputed,
  kDescriptionMentionsDrop,
  kDescriptionMentionsPanic,
  kDescriptionMentionsSendSync,
  kDescriptionWordCount,
  kSnippetImputed,
  kRatioImputed,
  kSyncPrimitiveCount,
  kSlotCount
};

static_assert(kSlotCount == kStandardFeatureCount);

std::vector<FeatureEntry> standard_entries() {
  std::vector<FeatureEntry> e(kSlotCount);
  auto set = [&](Slot s, const char* name, F family, K kind) { e[s] = {name, family, kind}; };
  set(kGenericParamCount, "generic_param_count", F::MirSemantic, K::Count);
  set(kTraitBoundFlag, "trait_bound_flag", F::MirSemantic, K::Flag);
  set(kTraitBoundCount, "trait_bound_count", F::MirSemantic, K::Count);
  set(kGenericNestingDepth, "generic_nesting_depth", F::MirSemantic, K::Count);
  set(kLifetimeParamCount, "lifetime_param_count", F::MirSemantic, K::Count);
  set(kStaticLifetimeFlag, "static_lifetime_flag", F::MirSemantic, K::Flag);
  set(kWhereClauseFlag, "where_clause_flag", F::MirSemantic, K::Flag);
  set(kBorrowRatio, "borrow_ratio", F::MirSemantic, K::Ratio);
  set(kMutBorrowRatio, "mut_borrow_ratio", F::MirSemantic, K::Ratio);
  set(kBorrowNestingDepth, "borrow_nesting_depth", F::MirSemantic, K::Count);
  set(kSmartPointerFlag, "smart_pointer_flag", F::MirSemantic, K::Flag);
  set(kSmartPointerCount, "smart_pointer_count", F::MirSemantic, K::Count);
  set(kRawPointerCount, "raw_pointer_count", F::MirSemantic, K::Count);
  set(kMoveClosureFlag, "move_closure_flag", F::MirSemantic, K::Flag);
  set(kCyclomaticComplexity, "cyclomatic_complexity", F::MirSemantic, K::Count);
  set(kCyclomaticComplexityLog, "cyclomatic_complexity_log", F::MirSemantic, K::LogScaled);
  set(kLoopNestingDepth, "loop_nesting_depth", F::MirSemantic, K::Count);
  set(kLoopCount, "loop_count", F::MirSemantic, K::Count);
  set(kPanicPathCount, "panic_path_count", F::MirSemantic, K::Count);
  set(kUnwrapCount, "unwrap_count", F::MirSemantic, K::Count);
  set(kMaxBraceDepth, "max_brace_depth", F::MirSemantic, K::Count);
  set(kEarlyReturnCount, "early_return_count", F::MirSemantic, K::Count);
  set(kMatchArmCount, "match_arm_count", F::MirSemantic, K::Count);
  set(kUnsafeBlockCount, "unsafe_block_count", F::MirSemantic, K::Count);
  set(kUnsafeFnFlag, "unsafe_fn_flag", F::MirSemantic, K::Flag);
  set(kBypassPanicSafety, "lifetime_bypass_panic_safety", F::MirSemantic, K::OneHot);
  set(kBypassHigherOrderInvariant, "lifetime_bypass_higher_order_invariant", F::MirSemantic, K::OneHot);
  set(kBypassSendSyncVariance, "lifetime_bypass_send_sync_variance", F::MirSemantic, K::OneHot);
  set(kBypassUnknown, "lifetime_bypass_unknown", F::MirSemantic, K::OneHot);
  set(kBypassToDangerDistance, "bypass_to_danger_distance", F::MirSemantic, K::Count);
  set(kBypassToDangerDistanceLog, "bypass_to_danger_distance_log", F::MirSemantic, K::LogScaled);
  set(kBypassOpCount, "bypass_op_count", F::MirSemantic, K::Count);
  set(kDangerCallCount, "danger_call_count", F::MirSemantic, K::Count);
  set(kSetLenFlag, "set_len_flag", F::MirSemantic, K::Flag);
  set(kPtrReadWriteCount, "ptr_read_write_count", F::MirSemantic, K::Count);
  set(kTransmuteFlag, "transmute_flag", F::MirSemantic, K::Flag);
  set(kUninitFlag, "uninit_flag", F::MirSemantic, K::Flag);
  set(kMemForgetFlag, "mem_forget_flag", F::MirSemantic, K::Flag);
  set(kFromRawFlag, "from_raw_flag", F::MirSemantic, K::Flag);
  set(kClosureBoundFlag, "closure_bound_flag", F::MirSemantic, K::Flag);
  set(kDropImplFlag, "drop_impl_flag", F::MirSemantic, K::Flag);
  set(kUnsafeImplSendSyncFlag, "unsafe_impl_send_sync_flag", F::MirSemantic, K::Flag);
  set(kPhantomDataFlag, "phantom_data_flag", F::MirSemantic, K::Flag);
  set(kPackageDownloadsLog, "package_downloads_log", F::Structural, K::LogScaled);
  set(kPackageDownloadsImputed, "package_downloads_imputed", F::Structural, K::Flag);
  set(kPackageUnsafePrevalence, "package_unsafe_prevalence", F::Structural, K::Ratio);
  set(kPackageUnsafePrevalenceImputed, "package_unsafe_prevalence_imputed", F::Structural, K::Flag);
  set(kPackageTotalLocLog, "package_total_loc_log", F::Structural, K::LogScaled);
  set(kPackageTotalLocImputed, "package_total_loc_imputed", F::Structural, K::Flag);
  set(kPublicApiFlag, "public_api_flag", F::Structural, K::Flag);
  set(kLinesOfCode, "lines_of_code", F::Structural, K::Count);
  set(kLinesOfCodeLog, "lines_of_code_log", F::Structural, K::LogScaled);
  set(kParameterCount, "parameter_count", F::Structural, K::Count);
  set(kSelfParamFlag, "self_param_flag", F::Structural, K::Flag);
  set(kCommentDensity, "comment_density", F::Structural, K::Ratio);
  set(kSnippetCharCountLog, "snippet_char_count_log", F::Structural, K::LogScaled);
  set(kIdentifierCount, "identifier_count", F::Structural, K::Count);
  set(kUniqueIdentifierRatio, "unique_identifier_ratio", F::Structural, K::Ratio);
  set(kFilePathDepth, "file_path_depth", F::Structural, K::Count);
  set(kTestPathFlag, "test_path_flag", F::Structural, K::Flag);
  set(kExampleOrBenchPathFlag, "example_or_bench_path_flag", F::Structural, K::Flag);
  set(kImplBlockFlag, "impl_block_flag", F::Structural, K::Flag);
  set(kTraitImplFlag, "trait_impl_flag", F::Structural, K::Flag);
  set(kMacroInvocationCount, "macro_invocation_count", F::Structural, K::Count);
  set(kSpanLineCount, "span_line_count", F::Structural, K::Count);
  set(kSpanColWidth, "span_col_width", F::Structural, K::Count);
  set(kSnippetElidedFlag, "snippet_elided_flag", F::Structural, K::Flag);
  set(kCheckerUnsafeDataflow, "checker_unsafe_dataflow", F::AnalysisSpecific, K::OneHot);
  set(kCheckerSendSyncVariance, "checker_send_sync_variance", F::AnalysisSpecific, K::OneHot);
  set(kCheckerUnsafeDestructor, "checker_unsafe_destructor", F::AnalysisSpecific, K::OneHot);
  set(kCheckerOther, "checker_other", F::AnalysisSpecific, K::OneHot);
  set(kPrecisionHigh, "precision_high", F::AnalysisSpecific, K::OneHot);
  set(kPrecisionMed, "precision_med", F::AnalysisSpecific, K::OneHot);
  set(kPrecisionLow, "precision_low", F::AnalysisSpecific, K::OneHot);
  set(kPrecisionScore, "precision_score", F::AnalysisSpecific, K::Ratio);
  set(kOpTypePresent, "op_type_present", F::AnalysisSpecific, K::Flag);
  set(kClusterSize, "cluster_size", F::AnalysisSpecific, K::Count);
  set(kClusterSizeLog, "cluster_size_log", F::AnalysisSpecific, K::LogScaled);
  set(kClusteredFlag, "clustered_flag", F::AnalysisSpecific, K::Flag);
  set(kClusterImputed, "cluster_imputed", F::AnalysisSpecific, K::Flag);
  set(kDescriptionMentionsDrop, "description_mentions_drop", F::AnalysisSpecific, K::Flag);
  set(kDescriptionMentionsPanic, "description_mentions_panic", F::AnalysisSpecific, K::Flag);
  set(kDescriptionMentionsSendSync, "description_mentions_send_sync", F::AnalysisSpecific, K::Flag);
  set(kDescriptionWordCount, "description_word_count", F::AnalysisSpecific, K::Count);
  set(kSnippetImputed, "snippet_imputed", F::AnalysisSpecific, K::Flag);
  set(kRatioImputed, "ratio_imputed", F::AnalysisSpecific, K::Flag);
  set(kSyncPrimitiveCount, "sync_primitive_count", F::MirSemantic, K::Count);
  return e;
}

// ---------------------------------------------------------------------------
// Lexer: just enough Rust tokenization for the counting rules below.

struct Token {
  enum class Kind { Ident, Lifetime, Punct, Literal };
  Kind kind;
  std::string text;
  int line;
  bool space_before;
};

struct Lexed {
  std::vector<Token> tokens;
  std::set<int> comment_lines;
  std::set<int> code_lines;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

Lexed lex(std::string_view src) {
  Lexed out;
  int line = 1;
  bool space = true;
  std::size_t i = 0;
  auto push = [&](Token::Kind kind, std::string text) {
    out.tokens.push_back({kind, std::move(text), line, space});
    out.code_lines.insert(line);
    space = false;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      space = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      space = true;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      out.comment_lines.insert(line);
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
      out.comment_lines.insert(line);
      i += 2;
      while (i < src.size() && !(src[i] == '*' && i + 1 < src.size() && src[i + 1] == '/')) {
        if (src[i] == '\n') {
          ++line;
          out.comment_lines.insert(line);
        }
        ++i;
      }
      i = std::min(src.size(), i + 2);
      space = true;
      continue;
    }
    if (c == '"') {
      const int start_line = line;
      ++i;
      while (i < src.size() && src[i] != '"') {
        if (src[i] == '\\') ++i;
        else if (src[i] == '\n') ++line;
        ++i;
      }
      ++i;
      out.tokens.push_back({Token::Kind::Literal, "\"\"", start_line, space});
      out.code_lines.insert(start_line);
      space = false;
      continue;
    }
    if (c == '\'') {
      // 'a' / '\n' are chars; 'a followed by anything else is a lifetime.
      if (i + 2 < src.size() && src[i + 1] == '\\') {
        std::size_t j = i + 2;
        while (j < src.size() && src[j] != '\'' && src[j] != '\n') ++j;
        i = j + 1;
        push(Token::Kind::Literal, "''");
        continue;
      }
      if (i + 2 < src.size() && src[i + 2] == '\'') {
        i += 3;
        push(Token::Kind::Literal, "''");
        continue;
      }
      std::size_t j = i + 1;
      while (j < src.size() && ident_char(src[j])) ++j;
      if (j > i + 1) {
        push(Token::Kind::Lifetime, std::string(src.substr(i, j - i)));
        i = j;
        continue;
      }
      ++i;
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      push(Token::Kind::Ident, std::string(src.substr(i, j - i)));
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && (ident_char(src[j]) || src[j] == '.')) {
        if (src[j] == '.' && (j + 1 >= src.size() || !std::isdigit(static_cast<unsigned char>(src[j + 1])))) break;
        ++j;
      }
      push(Token::Kind::Literal, std::string(src.substr(i, j - i)));
      i = j;
      continue;
    }
    static constexpr std::string_view kMulti[] = {"...", "::", "->", "=>", "&&", "||", "==",
                                                  "!=", "<=", ">=", ".."};
    bool matched = false;
    for (std::string_view op : kMulti) {
      if (src.substr(i, op.size()) == op) {
        push(Token::Kind::Punct, std::string(op));
        i += op.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    push(Token::Kind::Punct, std::string(1, c));
    ++i;
  }
  return out;
}

bool is(const Token& t, std::string_view text) { return t.text == text; }

bool is_ident(const Token& t, std::string_view text) {
  return t.kind == Token::Kind::Ident && t.text == text;
}

template <typename Set>
bool ident_in(const Token& t, const Set& names) {
  return t.kind == Token::Kind::Ident && names.count(t.text) > 0;
}

// A '<' opens generics when glued to an identifier, '::' or the `impl`/`fn` keyword.
bool opens_generic(const std::vector<Token>& toks, std::size_t i) {
  if (!is(toks[i], "<") || i == 0) return false;
  const Token& prev = toks[i - 1];
  if (is(prev, "::")) return true;
  if (is_ident(prev, "impl")) return true;
  return prev.kind == Token::Kind::Ident && !toks[i].space_before;
}

struct GenericList {
  std::size_t open;   // index of '<'
  std::size_t close;  // index of matching '>'
};

std::size_t match_generic(const std::vector<Token>& toks, std::size_t open) {
  int depth = 0;
  for (std::size_t j = open; j < toks.size(); ++j) {
    if (is(toks[j], "<")) ++depth;
    else if (is(toks[j], ">")) {
      if (--depth == 0) return j;
    } else if (is(toks[j], "{") || is(toks[j], ";")) {
      break;
    }
  }
  return toks.size();
}

// Generic parameter lists introduced by a declaration: fn name<..>, impl<..>,
// struct/enum/trait/type Name<..>.
std::vector<GenericList> declaration_generics(const std::vector<Token>& toks) {
  static const std::unordered_set<std::string> kDecl = {"fn", "struct", "enum", "trait", "type", "union"};
  std::vector<GenericList> out;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    std::size_t open = toks.size();
    if (is_ident(toks[i], "impl") && is(toks[i + 1], "<")) {
      open = i + 1;
    } else if (ident_in(toks[i], kDecl) && i + 2 < toks.size() &&
               toks[i + 1].kind == Token::Kind::Ident && is(toks[i + 2], "<")) {
      open = i + 2;
    }
    if (open == toks.size()) continue;
    const std::size_t close = match_generic(toks, open);
    if (close < toks.size()) out.push_back({open, close});
  }
  return out;
}

struct Signature {
  std::size_t param_count = 0;
  bool has_self = false;
  // Parameters whose type is a closure (generic bounded by Fn* or `impl Fn*`).
  std::set<std::string> closure_names;
};

Signature first_signature(const std::vector<Token>& toks, const std::set<std::string>& closure_generics) {
  Signature sig;
  std::size_t i = 0;
  while (i < toks.size() && !is_ident(toks[i], "fn")) ++i;
  if (i + 2 < toks.size() && is(toks[i + 2], "<")) {
    int angle = 0;
    for (i += 2; i < toks.size(); ++i) {
      if (is(toks[i], "<")) ++angle;
      else if (is(toks[i], ">") && --angle == 0) break;
    }
  }
  while (i < toks.size() && !is(toks[i], "(")) ++i;
  if (i >= toks.size()) return sig;
  int depth = 0;
  std::vector<const Token*> param;
  auto flush = [&] {
    if (param.empty()) return;
    ++sig.param_count;
    bool closure_typed = false;
    bool after_colon = false;
    for (const Token* t : param) {
      if (is_ident(*t, "self")) sig.has_self = true;
      if (is(*t, ":")) after_colon = true;
      if (after_colon && t->kind == Token::Kind::Ident &&
          (closure_generics.count(t->text) || t->text == "Fn" || t->text == "FnMut" || t->text == "FnOnce")) {
        closure_typed = true;
      }
    }
    if (closure_typed) {
      for (const Token* t : param) {
        if (t->kind == Token::Kind::Ident && t->text != "mut") {
          sig.closure_names.insert(t->text);
          break;
        }
      }
    }
    param.clear();
  };
  for (std::size_t j = i; j < toks.size(); ++j) {
    const Token& t = toks[j];
    if (is(t, "(") || is(t, "<") || is(t, "[")) {
      if (depth++ == 0) continue;
    } else if (is(t, ")") || is(t, ">") || is(t, "]")) {
      if (--depth == 0) {
        flush();
        break;
      }
    } else if (depth == 1 && is(t, ",")) {
      flush();
      continue;
    }
    param.push_back(&t);
  }
  return sig;
}

double log10p(double x) { return std::log10(1.0 + std::max(0.0, x)); }

struct SnippetFeatures {
  std::vector<double> values;  // indexed by Slot; only snippet-derived slots written
  bool ratio_imputed = false;
};

const std::unordered_set<std::string> kSmartPointers = {"Box", "Rc", "Arc", "Weak", "RefCell", "Cell", "Cow"};
const std::unordered_set<std::string> kPanicTokens = {"panic", "unwrap", "expect", "assert",
                                                      "assert_eq", "assert_ne", "unreachable",
                                                      "unimplemented", "todo"};
const std::unordered_set<std::string> kBranchKeywords = {"if", "match", "while", "for", "loop"};
const std::unordered_set<std::string> kLoopKeywords = {"while", "for", "loop"};
const std::unordered_set<std::string> kBypassOps = {
    "set_len",   "uninitialized",    "MaybeUninit",  "assume_init", "read",
    "read_unaligned", "copy",        "copy_nonoverlapping", "transmute", "forget",
    "from_raw_parts", "from_raw_parts_mut", "from_raw", "get_unchecked", "get_unchecked_mut",
    "write",     "write_unaligned"};
const std::unordered_set<std::string> kPtrAccess = {"read", "write", "read_unaligned", "write_unaligned",
                                                    "copy", "copy_nonoverlapping"};
const std::unordered_set<std::string> kHigherOrderCalls = {"clone", "drop", "call", "call_mut", "call_once",
                                                           "next", "cmp", "partial_cmp", "eq", "hash",
                                                           "borrow", "deref", "fmt", "into_iter"};
const std::unordered_set<std::string> kSyncPrimitives = {"UnsafeCell", "Mutex", "RwLock", "Condvar",
                                                         "AtomicBool", "AtomicUsize", "AtomicIsize",
                                                         "AtomicPtr", "AtomicU64", "AtomicI64",
                                                         "AtomicU32", "AtomicI32"};

SnippetFeatures snippet_features(std::string_view snippet) {
  SnippetFeatures out;
  out.values.assign(kSlotCount, 0.0);
  auto& v = out.values;
  const Lexed lexed = lex(snippet);
  const auto& toks = lexed.tokens;

  // Generic parameters and bounds.
  const auto generics = declaration_generics(toks);
  std::set<std::string> closure_params;  // generic params bounded by Fn*
  for (const auto& g : generics) {
    int depth = 0;
    bool param_start = true;
    bool in_bound = false;
    std::string current;
    for (std::size_t j = g.open + 1; j < g.close; ++j) {
      const Token& t = toks[j];
      if (is(t, "<") || is(t, "(") || is(t, "[")) ++depth;
      if (is(t, ">") || is(t, ")") || is(t, "]")) --depth;
      if (depth != 0) continue;
      if (is(t, ",")) {
        param_start = true;
        in_bound = false;
        continue;
      }
      if (param_start) {
        param_start = false;
        if (t.kind == Token::Kind::Ident && !is_ident(t, "const")) {
          v[kGenericParamCount] += 1;
          current = t.text;
        } else if (is_ident(t, "const")) {
          v[kGenericParamCount] += 1;
          current.clear();
        } else {
          current.clear();
        }
        continue;
      }
      if (is(t, ":")) {
        in_bound = true;
        v[kTraitBoundFlag] = 1;
        v[kTraitBoundCount] += 1;
      } else if (in_bound && is(t, "+")) {
        v[kTraitBoundCount] += 1;
      } else if (in_bound && (is_ident(t, "Fn") || is_ident(t, "FnMut") || is_ident(t, "FnOnce"))) {
        if (!current.empty()) closure_params.insert(current);
      }
    }
  }

  // Angle-bracket nesting over the whole snippet.
  {
    int depth = 0;
    int max_depth = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (opens_generic(toks, i)) {
        max_depth = std::max(max_depth, ++depth);
      } else if (is(toks[i], ">") && depth > 0) {
        --depth;
      } else if (is(toks[i], "{") || is(toks[i], ";")) {
        depth = 0;
      }
    }
    v[kGenericNestingDepth] = max_depth;
  }

  const Signature signature = first_signature(toks, closure_params);
  std::size_t ident_count = 0;
  std::set<std::string> unique_idents;
  std::size_t borrow_count = 0;
  std::size_t mut_borrow_count = 0;
  int borrow_run = 0;
  int max_borrow_run = 0;
  int brace_depth = 0;
  int max_brace_depth = 0;
  std::vector<int> loop_brace_depths;  // brace depth at which each open loop body started
  bool pending_loop = false;
  int max_loop_nesting = 0;
  int first_bypass_line = -1;
  int danger_line_after_bypass = -1;

  for (std::size_t i = 0; i < toks.size(); ++i) {
    const Token& t = toks[i];
    const Token* next = i + 1 < toks.size() ? &toks[i + 1] : nullptr;
    const Token* prev = i > 0 ? &toks[i - 1] : nullptr;

    if (t.kind == Token::Kind::Ident) {
      ++ident_count;
      unique_idents.insert(t.text);
    }
    if (t.kind == Token::Kind::Lifetime) {
      v[kLifetimeParamCount] += 1;
      if (t.text == "'static") v[kStaticLifetimeFlag] = 1;
    }
    if (is_ident(t, "where")) v[kWhereClauseFlag] = 1;

    // Borrows: '&' not part of '&&'.
    if (is(t, "&")) {
      ++borrow_count;
      ++borrow_run;
      max_borrow_run = std::max(max_borrow_run, borrow_run);
      if (next && is_ident(*next, "mut")) ++mut_borrow_count;
    } else if (!is_ident(t, "mut")) {
      borrow_run = 0;
    }

    if (ident_in(t, kSmartPointers)) v[kSmartPointerCount] += 1;
    if (is(t, "*") && next && (is_ident(*next, "const") || is_ident(*next, "mut"))) v[kRawPointerCount] += 1;
    if (is_ident(t, "NonNull")) v[kRawPointerCount] += 1;
    if (is_ident(t, "move") && next && (is(*next, "|") || is(*next, "||"))) v[kMoveClosureFlag] = 1;

    if (ident_in(t, kBranchKeywords)) v[kCyclomaticComplexity] += 1;
    if (ident_in(t, kLoopKeywords)) {
      v[kLoopCount] += 1;
      pending_loop = true;
    }
    if (is(t, "{")) {
      ++brace_depth;
      max_brace_depth = std::max(max_brace_depth, brace_depth);
      if (pending_loop) {
        loop_brace_depths.push_back(brace_depth);
        max_loop_nesting = std::max(max_loop_nesting, static_cast<int>(loop_brace_depths.size()));
        pending_loop = false;
      }
    } else if (is(t, "}")) {
      if (!loop_brace_depths.empty() && loop_brace_depths.back() == brace_depth) loop_brace_depths.pop_back();
      brace_depth = std::max(0, brace_depth - 1);
    } else if (is(t, ";")) {
      pending_loop = false;
    }

    if (ident_in(t, kPanicTokens)) v[kPanicPathCount] += 1;
    if (is_ident(t, "unwrap") || is_ident(t, "expect")) v[kUnwrapCount] += 1;
    if (is_ident(t, "return") || is(t, "?")) v[kEarlyReturnCount] += 1;
    if (is(t, "=>")) v[kMatchArmCount] += 1;

    if (is_ident(t, "unsafe") && next) {
      if (is(*next, "{")) v[kUnsafeBlockCount] += 1;
      if (is_ident(*next, "fn")) v[kUnsafeFnFlag] = 1;
      if (is_ident(*next, "impl")) {
        for (std::size_t j = i + 1; j < toks.size() && !is(toks[j], "{"); ++j) {
          if (is_ident(toks[j], "Send") || is_ident(toks[j], "Sync")) v[kUnsafeImplSendSyncFlag] = 1;
        }
      }
    }

    const bool accessor = prev && (is(*prev, "::") || is(*prev, "."));
    if (ident_in(t, kBypassOps) && (accessor || (next && is(*next, "<")) || is_ident(t, "MaybeUninit"))) {
      const bool plain_io = (t.text == "read" || t.text == "write") && !(prev && is(*prev, "::"));
      if (!plain_io) {
        v[kBypassOpCount] += 1;
        if (first_bypass_line < 0) first_bypass_line = t.line;
        if (t.text == "set_len") v[kSetLenFlag] = 1;
        if (t.text == "transmute") v[kTransmuteFlag] = 1;
        if (t.text == "uninitialized" || t.text == "MaybeUninit" || t.text == "assume_init") v[kUninitFlag] = 1;
        if (t.text == "forget") v[kMemForgetFlag] = 1;
        if (t.text.rfind("from_raw", 0) == 0) v[kFromRawFlag] = 1;
        if (kPtrAccess.count(t.text)) v[kPtrReadWriteCount] += 1;
      }
    }
    if (is_ident(t, "ManuallyDrop")) v[kMemForgetFlag] = 1;

    const bool is_call = next && is(*next, "(");
    const bool closure_call = t.kind == Token::Kind::Ident && is_call && !accessor &&
                              signature.closure_names.count(t.text) > 0 && !(prev && is_ident(*prev, "fn"));
    if ((ident_in(t, kHigherOrderCalls) && is_call && accessor) || closure_call) {
      v[kDangerCallCount] += 1;
      if (first_bypass_line >= 0 && danger_line_after_bypass < 0) danger_line_after_bypass = t.line;
    }

    if (is_ident(t, "Fn") || is_ident(t, "FnMut") || is_ident(t, "FnOnce")) v[kClosureBoundFlag] = 1;
    if (is_ident(t, "PhantomData")) v[kPhantomDataFlag] = 1;
    if (ident_in(t, kSyncPrimitives)) v[kSyncPrimitiveCount] += 1;

    if (is_ident(t, "pub") && !(next && is(*next, "("))) v[kPublicApiFlag] = 1;
    if (is_ident(t, "impl")) {
      v[kImplBlockFlag] = 1;
      for (std::size_t j = i + 1; j < toks.size() && !is(toks[j], "{") && !is(toks[j], ";"); ++j) {
        if (is_ident(toks[j], "for")) {
          v[kTraitImplFlag] = 1;
          if (j > 0 && is_ident(toks[j - 1], "Drop")) v[kDropImplFlag] = 1;
          break;
        }
      }
    }
    if (t.kind == Token::Kind::Ident && next && is(*next, "!") && i + 2 < toks.size() &&
        (is(toks[i + 2], "(") || is(toks[i + 2], "[") || is(toks[i + 2], "{"))) {
      v[kMacroInvocationCount] += 1;
    }
    if (is(t, "...")) v[kSnippetElidedFlag] = 1;

  }

  if (!toks.empty()) v[kCyclomaticComplexity] += 1;
  v[kCyclomaticComplexityLog] = std::log1p(v[kCyclomaticComplexity]);
  v[kLoopNestingDepth] = max_loop_nesting;
  v[kMaxBraceDepth] = max_brace_depth;
  v[kBorrowNestingDepth] = max_borrow_run;
  v[kSmartPointerFlag] = v[kSmartPointerCount] > 0 ? 1 : 0;
  v[kParameterCount] = static_cast<double>(signature.param_count);
  v[kSelfParamFlag] = signature.has_self ? 1 : 0;
  v[kIdentifierCount] = static_cast<double>(ident_count);

  if (first_bypass_line >= 0 && danger_line_after_bypass >= 0) {
    v[kBypassToDangerDistance] = danger_line_after_bypass - first_bypass_line;
  }
  v[kBypassToDangerDistanceLog] = std::log1p(v[kBypassToDangerDistance]);

  auto ratio = [&](Slot slot, std::size_t num, std::size_t den) {
    if (den == 0) {
      v[slot] = 0.5;
      out.ratio_imputed = true;
    } else {
      v[slot] = std::clamp(static_cast<double>(num) / static_cast<double>(den), 0.0, 1.0);
    }
  };
  ratio(kBorrowRatio, borrow_count, ident_count);
  ratio(kMutBorrowRatio, mut_borrow_count, borrow_count);
  ratio(kUniqueIdentifierRatio, unique_idents.size(), ident_count);

  std::set<int> all_lines = lexed.code_lines;
  all_lines.insert(lexed.comment_lines.begin(), lexed.comment_lines.end());
  std::size_t loc = 0;
  for (int l : lexed.code_lines) {
    (void)l;
    ++loc;
  }
  v[kLinesOfCode] = static_cast<double>(loc);
  v[kLinesOfCodeLog] = log10p(static_cast<double>(loc));
  ratio(kCommentDensity, lexed.comment_lines.size(), all_lines.size());
  v[kSnippetCharCountLog] = log10p(static_cast<double>(snippet.size()));
  return out;
}

}  // namespace

const FeatureManifest& FeatureManifest::standard() {
  static const FeatureManifest manifest(1, standard_entries());
  return manifest;
}

void validate_vector(const FeatureVector& vector, const FeatureManifest& manifest) {
  if (vector.values.size() != manifest.size()) {
    throw LengthMismatch("feature vector for " + to_hex(vector.warning_id) + " has " +
                         std::to_string(vector.values.size()) + " values, manifest has " +
                         std::to_string(manifest.size()));
  }
  for (std::size_t i = 0; i < vector.values.size(); ++i) {
    const double x = vector.values[i];
    const auto& entry = manifest[i];
    auto fail = [&](const char* what) {
      throw ValidationError("feature '" + entry.name + "' of " + to_hex(vector.warning_id) + " " + what);
    };
    if (!std::isfinite(x)) fail("is not finite");
    switch (entry.kind) {
      case FeatureKind::Flag:
      case FeatureKind::OneHot:
        if (x != 0.0 && x != 1.0) fail("must be 0 or 1");
        break;
      case FeatureKind::Ratio:
        if (x < 0.0 || x > 1.0) fail("must lie in [0, 1]");
        break;
      case FeatureKind::Count:
      case FeatureKind::LogScaled:
        break;
    }
  }
}

std::string package_name_from_path(std::string_view file) {
  std::string_view head = file.substr(0, file.find('/'));
  // Strip a trailing "-<version>" where the version starts with a digit.
  for (std::size_t pos = head.find('-'); pos != std::string_view::npos; pos = head.find('-', pos + 1)) {
    if (pos + 1 < head.size() && std::isdigit(static_cast<unsigned char>(head[pos + 1]))) {
      return std::string(head.substr(0, pos));
    }
  }
  return std::string(head);
}

namespace {

bool contains_ci(std::string_view haystack, std::string_view needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) ==
                                                    std::tolower(static_cast<unsigned char>(b)); });
  return it != haystack.end();
}

}  // namespace

FeatureVector extract_features(const WarningRecord& record, const std::optional<PackageMetadata>& meta,
                               const AnalysisContext& context, const FeatureVector* sidecar,
                               ExtractionMode mode, const FeatureManifest& manifest) {
  if (mode == ExtractionMode::Precomputed) {
    if (!sidecar) throw ValidationError("precomputed extraction needs a sidecar vector for " + record.id_hex());
    if (sidecar->manifest_digest != manifest.digest()) {
      throw DigestMismatch(manifest.digest(), sidecar->manifest_digest);
    }
    FeatureVector out = *sidecar;
    out.warning_id = record.id;
    validate_vector(out, manifest);
    return out;
  }

  if (manifest.digest() != FeatureManifest::standard().digest()) {
    throw DigestMismatch(FeatureManifest::standard().digest(), manifest.digest());
  }
  if (record.code_snippet.size() > kMaxSnippetBytes) {
    throw SnippetTooLarge("snippet of " + record.id_hex() + " is " + std::to_string(record.code_snippet.size()) +
                          " bytes; the limit is " + std::to_string(kMaxSnippetBytes));
  }

  SnippetFeatures snippet = snippet_features(record.code_snippet);
  auto& v = snippet.values;
  const bool empty_snippet = record.code_snippet.find_first_not_of(" \t\r\n") == std::string::npos;
  v[kSnippetImputed] = empty_snippet ? 1 : 0;
  v[kRatioImputed] = snippet.ratio_imputed ? 1 : 0;

  switch (infer_bug_pattern(record)) {
    case BugPattern::PanicSafety: v[kBypassPanicSafety] = 1; break;
    case BugPattern::HigherOrderInvariant: v[kBypassHigherOrderInvariant] = 1; break;
    case BugPattern::SendSyncVariance: v[kBypassSendSyncVariance] = 1; break;
    case BugPattern::Unknown: v[kBypassUnknown] = 1; break;
  }

  // Package metadata.
  if (meta && meta->download_count) {
    v[kPackageDownloadsLog] = log10p(static_cast<double>(*meta->download_count));
  } else {
    v[kPackageDownloadsImputed] = 1;
  }
  if (meta && meta->unsafe_prevalence) {
    v[kPackageUnsafePrevalence] = std::clamp(*meta->unsafe_prevalence, 0.0, 1.0);
  } else {
    v[kPackageUnsafePrevalence] = 0.5;
    v[kPackageUnsafePrevalenceImputed] = 1;
  }
  if (meta && meta->total_loc) {
    v[kPackageTotalLocLog] = log10p(static_cast<double>(*meta->total_loc));
  } else {
    v[kPackageTotalLocImputed] = 1;
  }

  // Location.
  v[kFilePathDepth] = static_cast<double>(std::count(record.file.begin(), record.file.end(), '/'));
  v[kTestPathFlag] = (record.file.find("/tests/") != std::string::npos ||
                      record.file.find("_test") != std::string::npos ||
                      record.file.find("/test/") != std::string::npos)
                         ? 1
                         : 0;
  v[kExampleOrBenchPathFlag] = (record.file.find("/examples/") != std::string::npos ||
                                record.file.find("/benches/") != std::string::npos)
                                   ? 1
                                   : 0;
  v[kSpanLineCount] = record.span.end_line - record.span.start_line + 1;
  v[kSpanColWidth] = record.span.start_line == record.span.end_line
                         ? record.span.end_col - record.span.start_col + 1
                         : 0;

  // Analyzer.
  if (record.analyzer == "UnsafeDataflow") v[kCheckerUnsafeDataflow] = 1;
  else if (record.analyzer == "SendSyncVariance") v[kCheckerSendSyncVariance] = 1;
  else if (record.analyzer == "UnsafeDestructor") v[kCheckerUnsafeDestructor] = 1;
  else v[kCheckerOther] = 1;
  switch (record.level) {
    case Level::Error: v[kPrecisionHigh] = 1; v[kPrecisionScore] = 1.0; break;
    case Level::Warning: v[kPrecisionMed] = 1; v[kPrecisionScore] = 0.5; break;
    case Level::Info: v[kPrecisionLow] = 1; v[kPrecisionScore] = 0.0; break;
  }
  v[kOpTypePresent] = record.op_type ? 1 : 0;
  if (context.cluster_size) {
    v[kClusterSize] = std::max(0, *context.cluster_size);
    v[kClusterSizeLog] = std::log1p(v[kClusterSize]);
    v[kClusteredFlag] = *context.cluster_size > 1 ? 1 : 0;
  } else {
    v[kClusterImputed] = 1;
  }
  v[kDescriptionMentionsDrop] = contains_ci(record.description, "drop") ? 1 : 0;
  v[kDescriptionMentionsPanic] = contains_ci(record.description, "panic") ? 1 : 0;
  v[kDescriptionMentionsSendSync] =
      (contains_ci(record.description, "send") || contains_ci(record.description, "sync")) ? 1 : 0;
  {
    std::istringstream words(record.description);
    std::string w;
    double n = 0;
    while (words >> w) n += 1;
    v[kDescriptionWordCount] = n;
  }

  FeatureVector out{record.id, std::move(v), manifest.digest()};
  validate_vector(out, manifest);
  return out;
}

NormalizerStats fit_normalizer(std::span<const FeatureVector> train_vectors, const FeatureManifest& manifest) {
  if (train_vectors.size() < 2) {
    throw EmptyTrainSet("normalizer needs at least 2 training vectors, got " +
                        std::to_string(train_vectors.size()));
  }
  const std::size_t dim = manifest.size();
  NormalizerStats stats;
  stats.manifest_digest = manifest.digest();
  stats.fitted_on = Split::Train;
  stats.mean.assign(dim, 0.0);
  stats.sd.assign(dim, 0.0);
  stats.passthrough.assign(dim, 0);
  for (std::size_t j = 0; j < dim; ++j) stats.passthrough[j] = manifest[j].kind == FeatureKind::OneHot ? 1 : 0;

  for (const auto& v : train_vectors) {
    if (v.manifest_digest != manifest.digest()) throw DigestMismatch(manifest.digest(), v.manifest_digest);
    if (v.values.size() != dim) throw LengthMismatch("training vector length does not match the manifest");
  }
  const double n = static_cast<double>(train_vectors.size());
  for (std::size_t j = 0; j < dim; ++j) {
    double sum = 0.0;
    for (const auto& v : train_vectors) sum += v.values[j];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& v : train_vectors) ss += (v.values[j] - mean) * (v.values[j] - mean);
    stats.mean[j] = mean;
    stats.sd[j] = std::sqrt(ss / (n - 1.0));
  }
  return stats;
}

FeatureVector normalize(const FeatureVector& vector, const NormalizerStats& stats) {
  if (vector.manifest_digest != stats.manifest_digest) {
    throw DigestMismatch(stats.manifest_digest, vector.manifest_digest);
  }
  if (vector.values.size() != stats.mean.size()) {
    throw LengthMismatch("vector length " + std::to_string(vector.values.size()) +
                         " does not match normalizer length " + std::to_string(stats.mean.size()));
  }
  FeatureVector out = vector;
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    if (stats.passthrough[j]) continue;
    out.values[j] = stats.sd[j] > 0.0 ? (vector.values[j] - stats.mean[j]) / stats.sd[j] : 0.0;
  }
  return out;
}

std::string serialize_feature_sidecar(std::span<const FeatureVector> vectors) {
  std::string out;
  for (const auto& v : vectors) {
    ordered_json o;
    o["warning_id"] = to_hex(v.warning_id);
    o["manifest_digest"] = v.manifest_digest;
    o["values"] = v.values;
    out += o.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

json parse_line(std::string_view line, std::size_t index, const char* what) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(index, "<line>", std::string("of the ") + what + " is not valid JSON");
  }
}

}  // namespace

std::vector<FeatureVector> parse_feature_sidecar(std::string_view content) {
  std::vector<FeatureVector> out;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json obj = parse_line(lines[i], i, "feature sidecar");
    FeatureVector v;
    if (!obj.contains("warning_id") || !obj["warning_id"].is_string()) {
      throw SchemaError(i, "warning_id", "must be a hex string");
    }
    auto id = parse_hex(obj["warning_id"].get<std::string>());
    if (!id) throw SchemaError(i, "warning_id", "must be a hex string");
    v.warning_id = *id;
    if (!obj.contains("manifest_digest") || !obj["manifest_digest"].is_string()) {
      throw SchemaError(i, "manifest_digest", "must be a string");
    }
    v.manifest_digest = obj["manifest_digest"].get<std::string>();
    if (!obj.contains("values") || !obj["values"].is_array()) throw SchemaError(i, "values", "must be an array");
    for (const auto& x : obj["values"]) {
      if (!x.is_number()) throw SchemaError(i, "values", "must contain only numbers");
      v.values.push_back(x.get<double>());
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<PackageMetadata> parse_package_metadata(std::string_view content) {
  std::vector<PackageMetadata> out;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json obj = parse_line(lines[i], i, "package metadata");
    PackageMetadata m;
    if (!obj.contains("package") || !obj["package"].is_string()) throw SchemaError(i, "package", "must be a string");
    m.name = obj["package"].get<std::string>();
    if (auto it = obj.find("download_count"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
        throw SchemaError(i, "download_count", "must be a non-negative integer");
      }
      m.download_count = it->get<std::uint64_t>();
    }
    if (auto it = obj.find("unsafe_prevalence"); it != obj.end() && !it->is_null()) {
      const double p = it->get<double>();
      if (!(p >= 0.0 && p <= 1.0)) throw SchemaError(i, "unsafe_prevalence", "must lie in [0, 1]");
      m.unsafe_prevalence = p;
    }
    if (auto it = obj.find("total_loc"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw SchemaError(i, "total_loc", "must be a non-negative integer");
      }
      m.total_loc = it->get<std::uint64_t>();
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace triage
