#include "trendscope/export.hpp"

#include <unordered_map>

namespace trendscope {

namespace {

std::unordered_map<std::string, const ChangeRecord*> index_changes(
    const std::vector<ChangeRecord>& changes) {
  std::unordered_map<std::string, const ChangeRecord*> by_id;
  for (const auto& c : changes) by_id.emplace(c.id, &c);
  return by_id;
}

}  // namespace

Json trends_geojson(const std::vector<TrendRecord>& trends, const std::vector<ChangeRecord>& changes) {
  const auto by_id = index_changes(changes);
  Json features = Json::array();
  for (const auto& t : trends) {
    if (!t.verification.positive) continue;
    for (const auto& id : t.verification.confirmed_change_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("trend " + t.proposal.proposal_id + " confirms unknown change " + id);
      const ChangeRecord& c = *it->second;
      features.push_back(Json{
          {"type", "Feature"},
          {"geometry", Json{{"type", "Point"}, {"coordinates", Json::array({c.lon, c.lat})}}},
          {"properties", Json{{"trend", t.proposal.text},
                              {"proposal_id", t.proposal.proposal_id},
                              {"change_id", c.id},
                              {"location_id", c.location_id},
                              {"before_time", format_rfc3339(c.before_time)},
                              {"after_time", format_rfc3339(c.after_time)},
                              {"before_uri", c.before_uri},
                              {"after_uri", c.after_uri},
                              {"change", change_text(c)}}}});
    }
  }
  return Json{{"type", "FeatureCollection"}, {"features", features}};
}

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string render_report_html(const std::vector<TrendRecord>& trends,
                               const std::vector<ChangeRecord>& changes, const Json& summary) {
  const auto by_id = index_changes(changes);
  std::size_t positive = 0;
  for (const auto& t : trends) positive += t.verification.positive;

  std::string h;
  h += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  h += "<title>Verified trends</title>\n<style>\n";
  h += "body{font-family:sans-serif;margin:2em;max-width:70em}\n";
  h += "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.25em .5em;text-align:left}\n";
  h += "details{margin:.5em 0}\n</style>\n</head>\n<body>\n";
  h += "<h1>Verified trends</h1>\n";
  h += "<p>" + std::to_string(positive) + " of " + std::to_string(trends.size()) +
       " proposals verified.</p>\n";
  if (summary.is_object() && !summary.empty()) {
    h += "<table>\n";
    for (const auto& [key, value] : summary.items())
      h += "<tr><th>" + html_escape(key) + "</th><td>" +
           html_escape(value.is_string() ? value.get<std::string>() : value.dump()) + "</td></tr>\n";
    h += "</table>\n";
  }
  h += "<h2>Trends</h2>\n<ol>\n";
  for (const auto& t : trends) {
    if (!t.verification.positive) continue;
    h += "<li><details><summary>" + html_escape(t.proposal.text) + " <small>(" +
         std::to_string(t.verification.confirmed_change_ids.size()) + " confirmed, " +
         std::to_string(t.verification.oracle_queries_used) + " queries, " +
         std::to_string(t.proposal.member_count) + " cluster members)</small></summary>\n<table>\n";
    h += "<tr><th>change</th><th>location</th><th>before</th><th>after</th></tr>\n";
    for (const auto& id : t.verification.confirmed_change_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) continue;
      const ChangeRecord& c = *it->second;
      h += "<tr><td>" + html_escape(change_text(c)) + "</td><td>" + html_escape(c.location_id) + "</td>";
      h += "<td>" + html_escape(format_rfc3339(c.before_time)) + "<br><code>" + html_escape(c.before_uri) +
           "</code></td>";
      h += "<td>" + html_escape(format_rfc3339(c.after_time)) + "<br><code>" + html_escape(c.after_uri) +
           "</code></td></tr>\n";
    }
    h += "</table></details></li>\n";
  }
  h += "</ol>\n</body>\n</html>\n";
  return h;
}

}  // namespace trendscope
