#include "trendscope/prompts.hpp"

#include <array>

#include "trendscope/common.hpp"

namespace trendscope {

namespace {

constexpr std::array<std::pair<RequestKind, std::string_view>, 6> kKindNames{{
    {RequestKind::detect_changes, "detect_changes"},
    {RequestKind::self_critic, "self_critic"},
    {RequestKind::derive_abstractions, "derive_abstractions"},
    {RequestKind::verify_membership, "verify_membership"},
    {RequestKind::unusual_things, "unusual_things"},
    {RequestKind::caption_image, "caption_image"},
}};

}  // namespace

std::string_view to_string(RequestKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

RequestKind request_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw Error("unknown request kind: " + std::string(name));
}

std::string render_template(std::string_view tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      out.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else if (c == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos) throw Error("unterminated placeholder in template");
      const auto name = tmpl.substr(i + 1, close - i - 1);
      auto it = bindings.find(name);
      if (it == bindings.end()) throw Error("unbound template placeholder {" + std::string(name) + "}");
      out += it->second;
      i = close;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  for (const auto& [kind, name] : kKindNames) {
    const auto file = dir / (std::string(name) + ".txt");
    if (std::filesystem::exists(file)) lib.templates_[kind] = read_file(file);
    const auto ex = dir / (std::string(name) + ".examples.txt");
    if (std::filesystem::exists(ex)) lib.examples_[kind] = read_file(ex);
  }
  if (lib.templates_.empty()) throw Error("no prompt templates found in " + dir.string());
  return lib;
}

PromptLibrary PromptLibrary::load_default() { return load(TRENDSCOPE_PROMPT_DIR); }

bool PromptLibrary::has(RequestKind kind) const { return templates_.count(kind) != 0; }

const std::string& PromptLibrary::text(RequestKind kind) const {
  auto it = templates_.find(kind);
  if (it == templates_.end())
    throw Error("no prompt template for " + std::string(to_string(kind)));
  return it->second;
}

const std::string& PromptLibrary::examples(RequestKind kind) const {
  static const std::string none;
  auto it = examples_.find(kind);
  return it == examples_.end() ? none : it->second;
}

void PromptLibrary::set(RequestKind kind, std::string text) { templates_[kind] = std::move(text); }

std::string PromptLibrary::render(RequestKind kind, Bindings bindings) const {
  bindings.try_emplace("examples", examples(kind));
  return render_template(text(kind), bindings);
}

}  // namespace trendscope
