#include "triage/harness.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "builtin_templates.hpp"
#include "triage/error.hpp"
#include "triage/featurizer.hpp"

namespace triage {

namespace {

const char* template_file_name(BugPattern pattern) {
  switch (pattern) {
    case BugPattern::PanicSafety: return "panic_safety.rs.tmpl";
    case BugPattern::HigherOrderInvariant: return "higher_order_invariant.rs.tmpl";
    case BugPattern::SendSyncVariance: return "send_sync_variance.rs.tmpl";
    case BugPattern::Unknown: break;
  }
  return nullptr;
}

// Type parameters (not lifetimes) in the generic list starting at `open`.
std::size_t count_type_params(const std::string& text, std::size_t open) {
  int depth = 0;
  std::size_t count = 0;
  bool param_start = true;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '<') {
      if (depth++ == 0) continue;
    } else if (c == '>') {
      if (--depth == 0) break;
    } else if (c == '{' || c == '(') {
      break;
    }
    if (depth != 1) continue;
    if (c == ',') {
      param_start = true;
    } else if (param_start && !std::isspace(static_cast<unsigned char>(c))) {
      param_start = false;
      if (c != '\'') ++count;
    }
  }
  return count;
}

std::string crate_ident(std::string name) {
  for (char& c : name) {
    if (c == '-' || c == '.') c = '_';
  }
  return name.empty() ? std::string("target_crate") : name;
}

}  // namespace

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  set.set({BugPattern::PanicSafety, builtin_templates::kPanicSafety});
  set.set({BugPattern::HigherOrderInvariant, builtin_templates::kHigherOrderInvariant});
  set.set({BugPattern::SendSyncVariance, builtin_templates::kSendSyncVariance});
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set = builtin();
  for (auto pattern : {BugPattern::PanicSafety, BugPattern::HigherOrderInvariant, BugPattern::SendSyncVariance}) {
    const auto path = dir / template_file_name(pattern);
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream text;
    text << in.rdbuf();
    set.set({pattern, text.str()});
  }
  return set;
}

const HarnessTemplate* TemplateSet::find(BugPattern pattern) const {
  auto it = templates_.find(pattern);
  return it == templates_.end() ? nullptr : &it->second;
}

void TemplateSet::set(HarnessTemplate tmpl) { templates_[tmpl.pattern] = std::move(tmpl); }

std::string probe_type_args(BugPattern pattern, std::size_t generic_count) {
  if (generic_count == 0) return "";
  const char* probe = "u8";
  if (pattern == BugPattern::HigherOrderInvariant) probe = "Fickle";
  if (pattern == BugPattern::SendSyncVariance) probe = "Probe";
  std::string out = "::<";
  for (std::size_t i = 0; i < generic_count; ++i) {
    if (i) out += ", ";
    out += probe;
  }
  return out + ">";
}

HarnessTarget resolve_target(const WarningRecord& warning) {
  static const std::regex backticked(R"(`([A-Za-z_][A-Za-z0-9_]*)(?:::([A-Za-z_][A-Za-z0-9_]*))?`)");
  static const std::regex fn_decl(R"(\bfn\s+([A-Za-z_][A-Za-z0-9_]*)\s*(<)?)");
  static const std::regex impl_decl(
      R"(\bimpl\s*(?:<[^{]*?>)?\s*(?:([A-Za-z_][A-Za-z0-9_:]*)(?:<[^{]*?>)?\s+for\s+)?([A-Za-z_][A-Za-z0-9_]*))");

  HarnessTarget target;
  target.package = crate_ident(package_name_from_path(warning.file));
  const std::string& snippet = warning.code_snippet;

  std::smatch m;
  std::string impl_type;
  std::string impl_trait;
  std::size_t impl_generics = 0;
  if (std::regex_search(snippet, m, impl_decl)) {
    impl_trait = m[1].matched ? m[1].str() : "";
    impl_type = m[2].str();
    const std::size_t impl_pos = static_cast<std::size_t>(m.position(0));
    const std::size_t lt = snippet.find('<', impl_pos);
    if (lt != std::string::npos && lt < impl_pos + 6) impl_generics = count_type_params(snippet, lt);
  }

  if (std::regex_search(snippet, m, fn_decl)) {
    target.function = m[1].str();
    if (m[2].matched) target.generic_count = count_type_params(snippet, static_cast<std::size_t>(m.position(2)));
  } else if (std::regex_search(warning.description, m, backticked)) {
    target.function = m[2].matched ? m[2].str() : m[1].str();
    if (m[2].matched && impl_type.empty()) impl_type = m[1].str();
  } else if (!impl_type.empty() &&
             (impl_trait == "Drop" || warning.description.find("drop") != std::string::npos)) {
    target.function = "drop";
  }

  if (target.function.empty()) {
    throw UnresolvableTarget("cannot find a callable entry point for warning " + warning.id_hex() +
                             " (no fn in snippet, no `name` in description)");
  }
  if (!impl_type.empty() && impl_type != target.function) {
    target.entry = impl_type + "::" + target.function;
    if (target.generic_count == 0) target.generic_count = impl_generics;
  } else {
    target.entry = target.function;
  }
  return target;
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in harness template");
    const std::string key(text.substr(open + 2, close - open - 2));
    auto it = bindings.find(key);
    if (it == bindings.end()) throw ValidationError("unbound harness placeholder {{" + key + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string generate_harness(const WarningRecord& warning, const TemplateSet& templates) {
  const BugPattern pattern = infer_bug_pattern(warning);
  const HarnessTemplate* tmpl = pattern == BugPattern::Unknown ? nullptr : templates.find(pattern);
  if (!tmpl) {
    throw UnknownPattern("no harness template for analyzer '" + warning.analyzer + "' (pattern " +
                         std::string(to_string(pattern)) + ")");
  }
  const HarnessTarget target = resolve_target(warning);
  return render_template(tmpl->text, {{"package", target.package},
                                      {"function", target.function},
                                      {"type_args", probe_type_args(pattern, target.generic_count)},
                                      {"entry", target.entry}});
}

}  // namespace triage
