#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trendscope/records.hpp"

namespace trendscope {

enum class ChangeLineDefect {
  empty,
  missing_start,
  missing_arrow,
  missing_end,
  missing_index,
  bad_index,
  empty_description,
};

std::string_view to_string(ChangeLineDefect defect);

struct ChangeParseError {
  ChangeLineDefect defect;
  std::string message;
};

using ChangeParseResult = std::variant<RawChange, ChangeParseError>;

/// Parses one line of the form
///   Start: <before> → End: <after> (happened after image No.<X>).
/// Keywords match case-insensitively, whitespace is tolerated around every
/// token, "->" is accepted for the arrow and leading list bullets are
/// ignored. Never throws.
ChangeParseResult parse_change_line(std::string_view line);

/// Inverse of parse_change_line for well-formed changes.
std::string format_change_line(const RawChange& change);

struct DetectionParse {
  std::vector<RawChange> changes;
  std::vector<std::pair<std::size_t, ChangeParseError>> errors;  // 1-based line number
};

/// Splits an analyst answer into change lines. Lines that do not begin with
/// "Start" (after bullets) are commentary and skipped; lines that do but
/// fail to parse are reported.
DetectionParse parse_detection_response(std::string_view text);

struct AbstractionParse {
  std::vector<std::string> places;   // p1, p2, ...
  std::vector<std::string> changes;  // c1, c2, ...
  /// Combined abstractions in (place, change) row-major order; p1 + c1 is
  /// the full-detail version.
  std::vector<std::string> texts;
  std::size_t place_levels = 0;
  std::size_t change_levels = 0;
};

/// Parses the "(pX + cY) text" enumeration. The level grid is taken from the
/// combinations actually listed and must be complete; the stated "[N] levels"
/// counts are not trusted.
std::variant<AbstractionParse, std::string> parse_abstractions(std::string_view text);

/// Renders the enumeration format; used by scripted backends and tests.
std::string format_abstractions(const std::vector<std::string>& places,
                                const std::vector<std::string>& changes,
                                const std::vector<std::string>& texts);

/// First "Answer: Y" / "Answer: N" (brackets, trailing punctuation and
/// Yes/No accepted). nullopt when neither is found.
std::optional<bool> parse_yes_no(std::string_view text);

/// "Unusual: <finding>" lines; "None" or no such lines yields empty.
std::vector<std::string> parse_findings(std::string_view text);

}  // namespace trendscope
