#include "trendscope/records.hpp"

namespace trendscope {

std::string change_text(std::string_view before_desc, std::string_view after_desc) {
  if (trim(before_desc).empty()) return trim(after_desc);
  return trim(before_desc) + " → " + trim(after_desc);
}

std::string change_id(std::string_view location_id, int after_index, std::string_view before_desc,
                      std::string_view after_desc) {
  std::string key;
  key += location_id;
  key += '\x1f';
  key += std::to_string(after_index);
  key += '\x1f';
  key += normalize_text(before_desc);
  key += '\x1f';
  key += normalize_text(after_desc);
  return hex64(fnv1a64(key));
}

Json to_json(const ChangeRecord& c) {
  return Json{{"id", c.id},
              {"location_id", c.location_id},
              {"before_desc", c.before_desc},
              {"after_desc", c.after_desc},
              {"after_index", c.after_index},
              {"before_time", format_rfc3339(c.before_time)},
              {"after_time", format_rfc3339(c.after_time)},
              {"critic_passed", c.critic_passed},
              {"lat", c.lat},
              {"lon", c.lon},
              {"before_uri", c.before_uri},
              {"after_uri", c.after_uri}};
}

ChangeRecord change_from_json(const Json& j) {
  ChangeRecord c;
  c.id = j.at("id").get<std::string>();
  c.location_id = j.at("location_id").get<std::string>();
  c.before_desc = j.at("before_desc").get<std::string>();
  c.after_desc = j.at("after_desc").get<std::string>();
  c.after_index = j.at("after_index").get<int>();
  c.before_time = parse_rfc3339(j.at("before_time").get<std::string>());
  c.after_time = parse_rfc3339(j.at("after_time").get<std::string>());
  c.critic_passed = j.at("critic_passed").get<bool>();
  c.lat = j.at("lat").get<double>();
  c.lon = j.at("lon").get<double>();
  c.before_uri = j.value("before_uri", "");
  c.after_uri = j.value("after_uri", "");
  return c;
}

}  // namespace trendscope
