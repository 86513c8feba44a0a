#pragma once

#include <string>
#include <vector>

#include "trendscope/records.hpp"
#include "trendscope/trends.hpp"

namespace trendscope {

/// GeoJSON FeatureCollection with one Point per confirmed change of every
/// positive trend. Coordinates are [lon, lat].
Json trends_geojson(const std::vector<TrendRecord>& trends, const std::vector<ChangeRecord>& changes);

std::string html_escape(std::string_view text);

/// Static HTML page listing each verified trend with its counts and
/// evidence images. `summary` is rendered as a key/value table.
std::string render_report_html(const std::vector<TrendRecord>& trends,
                               const std::vector<ChangeRecord>& changes, const Json& summary);

}  // namespace trendscope
