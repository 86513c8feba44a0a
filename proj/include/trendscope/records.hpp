#pragma once

#include <string>
#include <string_view>

#include "trendscope/common.hpp"

namespace trendscope {

/// One change line as reported by the analyst, before grounding.
struct RawChange {
  std::string before_desc;
  std::string after_desc;
  int after_index = 0;  // 1-based: the change happened after this image

  bool operator==(const RawChange&) const = default;
};

/// A grounded change at one location between two consecutive images.
/// Pseudo-changes from single-image queries carry an empty before_desc and
/// after_index 0.
struct ChangeRecord {
  std::string id;
  std::string location_id;
  std::string before_desc;
  std::string after_desc;
  int after_index = 0;
  Timestamp before_time{};
  Timestamp after_time{};
  bool critic_passed = false;
  double lat = 0.0;
  double lon = 0.0;
  std::string before_uri;
  std::string after_uri;

  bool operator==(const ChangeRecord&) const = default;
};

/// Text used to embed and verify a change: "before → after", or just the
/// finding for single-image pseudo-changes.
std::string change_text(std::string_view before_desc, std::string_view after_desc);
inline std::string change_text(const ChangeRecord& c) {
  return change_text(c.before_desc, c.after_desc);
}

/// Stable id: hash of (location, after_index, normalized descriptions).
std::string change_id(std::string_view location_id, int after_index, std::string_view before_desc,
                      std::string_view after_desc);

Json to_json(const ChangeRecord& c);
ChangeRecord change_from_json(const Json& j);

}  // namespace trendscope
