#include "trendscope/parsing.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <regex>
#include <sstream>

namespace trendscope {

namespace {

constexpr std::string_view kArrow = "→";
constexpr std::string_view kAsciiArrow = "->";
constexpr std::string_view kIndexMarker = "happened after image";

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::size_t skip_ws(std::string_view s, std::size_t pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return pos;
}

/// Drops list markers such as "-", "*", "•", "1." and LaTeX "\item".
std::string_view strip_bullet(std::string_view s) {
  for (;;) {
    const auto begin = skip_ws(s, 0);
    s = s.substr(begin);
    if (s.starts_with("\\item")) {
      s.remove_prefix(5);
    } else if (s.starts_with("•")) {
      s.remove_prefix(std::string_view("•").size());
    } else if (!s.empty() && (s[0] == '-' || s[0] == '*') && !s.starts_with("->")) {
      s.remove_prefix(1);
    } else {
      return s;
    }
  }
}

/// Matches `keyword` (case-insensitive) followed by optional space and ':'.
/// Returns the position just past the colon, or npos.
std::size_t match_keyword(std::string_view s, std::size_t pos, std::string_view keyword) {
  if (!iequals_prefix(s.substr(pos), keyword)) return std::string_view::npos;
  pos = skip_ws(s, pos + keyword.size());
  if (pos >= s.size() || s[pos] != ':') return std::string_view::npos;
  return pos + 1;
}

ChangeParseError fail(ChangeLineDefect d, std::string msg) { return {d, std::move(msg)}; }

}  // namespace

std::string_view to_string(ChangeLineDefect defect) {
  switch (defect) {
    case ChangeLineDefect::empty: return "empty";
    case ChangeLineDefect::missing_start: return "missing start";
    case ChangeLineDefect::missing_arrow: return "missing arrow";
    case ChangeLineDefect::missing_end: return "missing end";
    case ChangeLineDefect::missing_index: return "missing index";
    case ChangeLineDefect::bad_index: return "bad index";
    case ChangeLineDefect::empty_description: return "empty description";
  }
  return "unknown";
}

ChangeParseResult parse_change_line(std::string_view line) {
  const std::string_view s = strip_bullet(line);
  if (trim(s).empty()) return fail(ChangeLineDefect::empty, "empty line");

  const std::size_t after_start = match_keyword(s, 0, "start");
  if (after_start == std::string_view::npos)
    return fail(ChangeLineDefect::missing_start, "line does not begin with 'Start:'");

  std::size_t arrow = s.find(kArrow, after_start);
  std::size_t arrow_len = kArrow.size();
  const std::size_t ascii = s.find(kAsciiArrow, after_start);
  if (ascii != std::string_view::npos && (arrow == std::string_view::npos || ascii < arrow)) {
    arrow = ascii;
    arrow_len = kAsciiArrow.size();
  }
  if (arrow == std::string_view::npos)
    return fail(ChangeLineDefect::missing_arrow, "no '→' between start and end");

  std::string before = trim(s.substr(after_start, arrow - after_start));
  if (before.empty())
    return fail(ChangeLineDefect::empty_description, "empty start description");

  const std::size_t end_kw = skip_ws(s, arrow + arrow_len);
  const std::size_t after_end = match_keyword(s, end_kw, "end");
  if (after_end == std::string_view::npos)
    return fail(ChangeLineDefect::missing_end, "no 'End:' after the arrow");

  const std::string rest(s.substr(after_end));
  const std::string lower = ascii_lower(rest);
  // The description may itself contain parentheses; the marker is the last one.
  std::size_t marker = std::string::npos, phrase = std::string::npos;
  for (std::size_t p = lower.find(kIndexMarker); p != std::string::npos;
       p = lower.find(kIndexMarker, p + 1)) {
    std::size_t q = p;
    while (q > 0 && std::isspace(static_cast<unsigned char>(lower[q - 1]))) --q;
    if (q > 0 && lower[q - 1] == '(') marker = q - 1, phrase = p;
  }
  if (marker == std::string::npos)
    return fail(ChangeLineDefect::missing_index, "no '(happened after image No.X)' marker");

  std::string after = trim(std::string_view(rest).substr(0, marker));
  if (after.empty()) return fail(ChangeLineDefect::empty_description, "empty end description");

  std::string_view tail = std::string_view(rest).substr(phrase + kIndexMarker.size());
  std::size_t pos = skip_ws(tail, 0);
  if (iequals_prefix(tail.substr(pos), "no")) {
    pos = skip_ws(tail, pos + 2);
    if (pos < tail.size() && tail[pos] == '.') pos = skip_ws(tail, pos + 1);
  }
  if (pos < tail.size() && tail[pos] == '[') pos = skip_ws(tail, pos + 1);
  const std::size_t digits_begin = pos;
  while (pos < tail.size() && std::isdigit(static_cast<unsigned char>(tail[pos]))) ++pos;
  if (pos == digits_begin) return fail(ChangeLineDefect::bad_index, "image index is not a number");
  int index = 0;
  const auto [ptr, ec] = std::from_chars(tail.data() + digits_begin, tail.data() + pos, index);
  if (ec != std::errc() || index < 1)
    return fail(ChangeLineDefect::bad_index, "image index out of range");
  pos = skip_ws(tail, pos);
  if (pos < tail.size() && tail[pos] == ']') pos = skip_ws(tail, pos + 1);
  if (pos >= tail.size() || tail[pos] != ')')
    return fail(ChangeLineDefect::bad_index, "unterminated image index");
  ++pos;
  while (pos < tail.size() && (tail[pos] == '.' || std::isspace(static_cast<unsigned char>(tail[pos]))))
    ++pos;
  if (pos != tail.size())
    return fail(ChangeLineDefect::bad_index, "unexpected text after the image index");

  return RawChange{std::move(before), std::move(after), index};
}

std::string format_change_line(const RawChange& change) {
  return "Start: " + change.before_desc + " → End: " + change.after_desc +
         " (happened after image No." + std::to_string(change.after_index) + ").";
}

DetectionParse parse_detection_response(std::string_view text) {
  DetectionParse out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = strip_bullet(line);
    if (!iequals_prefix(body, "start")) continue;
    auto parsed = parse_change_line(body);
    if (auto* change = std::get_if<RawChange>(&parsed)) {
      out.changes.push_back(std::move(*change));
    } else {
      out.errors.emplace_back(lineno, std::get<ChangeParseError>(parsed));
    }
  }
  return out;
}

std::variant<AbstractionParse, std::string> parse_abstractions(std::string_view text) {
  static const std::regex level_re(R"(^\s*([pc])\s*(\d+)\s*\.\s*(.*)$)", std::regex::icase);
  static const std::regex combo_re(R"(^\s*\(\s*p\s*(\d+)\s*\+\s*c\s*(\d+)\s*\)\s*(.*)$)",
                                   std::regex::icase);
  std::map<std::size_t, std::string> places, changes;
  std::map<std::pair<std::size_t, std::size_t>, std::string> combos;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string line(strip_bullet(raw));
    std::smatch m;
    if (std::regex_match(line, m, combo_re)) {
      const std::size_t p = std::stoul(m[1]), c = std::stoul(m[2]);
      const std::string body = trim(m[3].str());
      if (body.empty()) return "empty abstraction text for (p" + m[1].str() + " + c" + m[2].str() + ")";
      if (!combos.emplace(std::pair{p, c}, body).second)
        return "duplicate abstraction (p" + m[1].str() + " + c" + m[2].str() + ")";
    } else if (std::regex_match(line, m, level_re)) {
      auto& target = (m[1].str() == "p" || m[1].str() == "P") ? places : changes;
      target[std::stoul(m[2])] = trim(m[3].str());
    }
  }
  if (combos.empty()) return std::string("no (pX + cY) abstractions found");

  std::size_t max_p = 0, max_c = 0;
  for (const auto& [key, _] : combos) {
    max_p = std::max(max_p, key.first);
    max_c = std::max(max_c, key.second);
  }
  AbstractionParse out;
  out.place_levels = max_p;
  out.change_levels = max_c;
  for (std::size_t p = 1; p <= max_p; ++p) {
    for (std::size_t c = 1; c <= max_c; ++c) {
      auto it = combos.find({p, c});
      if (it == combos.end())
        return "incomplete abstraction grid: missing (p" + std::to_string(p) + " + c" +
               std::to_string(c) + ")";
      out.texts.push_back(it->second);
    }
  }
  if (combos.size() != out.texts.size()) return std::string("abstraction index 0 is not allowed");
  for (const auto& [_, v] : places) out.places.push_back(v);
  for (const auto& [_, v] : changes) out.changes.push_back(v);
  return out;
}

std::string format_abstractions(const std::vector<std::string>& places,
                                const std::vector<std::string>& changes,
                                const std::vector<std::string>& texts) {
  if (texts.size() != places.size() * changes.size())
    throw Error("abstraction table must be places x changes");
  std::string out = "Derivation:\nThere are " + std::to_string(places.size()) +
                    " levels of details on where the change happened:\n";
  for (std::size_t i = 0; i < places.size(); ++i)
    out += "p" + std::to_string(i + 1) + ". " + places[i] + "\n";
  out += "Meanwhile, there are " + std::to_string(changes.size()) +
         " levels of details on the change itself:\n";
  for (std::size_t i = 0; i < changes.size(); ++i)
    out += "c" + std::to_string(i + 1) + ". " + changes[i] + "\n";
  out += "\nAnswer:\n";
  for (std::size_t p = 0; p < places.size(); ++p)
    for (std::size_t c = 0; c < changes.size(); ++c)
      out += "(p" + std::to_string(p + 1) + " + c" + std::to_string(c + 1) + ") " +
             texts[p * changes.size() + c] + "\n";
  return out;
}

std::optional<bool> parse_yes_no(std::string_view text) {
  static const std::regex answer_re(R"(answer\s*:\s*\[?\s*(yes|no|y|n)\b)", std::regex::icase);
  const std::string s(text);
  std::smatch m;
  if (!std::regex_search(s, m, answer_re)) return std::nullopt;
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(m[1].str()[0])));
  return c == 'y';
}

std::vector<std::string> parse_findings(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto body = strip_bullet(line);
    const auto colon = match_keyword(body, 0, "unusual");
    if (colon == std::string_view::npos) continue;
    auto finding = trim(body.substr(colon));
    if (!finding.empty()) out.push_back(std::move(finding));
  }
  return out;
}

}  // namespace trendscope
