#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace trendscope {

enum class RequestKind {
  detect_changes,
  self_critic,
  derive_abstractions,
  verify_membership,
  unusual_things,
  caption_image,
};

std::string_view to_string(RequestKind kind);
RequestKind request_kind_from_string(std::string_view name);

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Substitutes {name} placeholders. "{{" and "}}" produce literal braces.
/// Throws Error on an unbound placeholder or an unterminated brace.
std::string render_template(std::string_view tmpl, const Bindings& bindings);

/// Prompt templates loaded from text assets, one file per request kind
/// ("<kind>.txt"). An optional "<kind>.examples.txt" supplies in-context
/// examples bound to {examples}.
class PromptLibrary {
 public:
  static PromptLibrary load(const std::filesystem::path& dir);
  static PromptLibrary load_default();

  bool has(RequestKind kind) const;
  const std::string& text(RequestKind kind) const;
  const std::string& examples(RequestKind kind) const;
  void set(RequestKind kind, std::string text);

  std::string render(RequestKind kind, Bindings bindings) const;

 private:
  std::map<RequestKind, std::string> templates_;
  std::map<RequestKind, std::string> examples_;
};

}  // namespace trendscope
