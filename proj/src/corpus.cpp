#include "trendscope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace trendscope {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double a = s1 * s1 + std::cos(lat1 * rad) * std::cos(lat2 * rad) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

CapturePoint parse_capture_point(const Json& record) {
  if (!record.is_object()) throw Error("record is not an object");
  for (const char* key : {"id", "lat", "lon", "timestamp", "image_uri"}) {
    if (!record.contains(key)) throw Error(std::string("missing field '") + key + "'");
  }
  CapturePoint p;
  if (!record["id"].is_string() || record["id"].get<std::string>().empty())
    throw Error("id must be a non-empty string");
  p.id = record["id"].get<std::string>();
  if (!record["lat"].is_number() || !record["lon"].is_number())
    throw Error("lat/lon must be numbers");
  p.lat = record["lat"].get<double>();
  p.lon = record["lon"].get<double>();
  if (!std::isfinite(p.lat) || p.lat < -90.0 || p.lat > 90.0) throw Error("lat out of range");
  if (!std::isfinite(p.lon) || p.lon < -180.0 || p.lon > 180.0) throw Error("lon out of range");
  if (!record["timestamp"].is_string()) throw Error("timestamp must be a string");
  p.timestamp = parse_rfc3339(record["timestamp"].get<std::string>());
  if (!record["image_uri"].is_string() || record["image_uri"].get<std::string>().empty())
    throw Error("image_uri must be a non-empty string");
  p.image_uri = record["image_uri"].get<std::string>();
  if (record.contains("heading")) {
    if (!record["heading"].is_number()) throw Error("heading must be a number");
    p.heading = std::fmod(record["heading"].get<double>(), 360.0);
    if (p.heading < 0) p.heading += 360.0;
  }
  return p;
}

Json to_json(const CapturePoint& p) {
  return Json{{"id", p.id},
              {"lat", p.lat},
              {"lon", p.lon},
              {"timestamp", format_rfc3339(p.timestamp)},
              {"image_uri", p.image_uri},
              {"heading", p.heading}};
}

ManifestLoad ingest_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest " + path.string());
  ManifestLoad load;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      load.points.push_back(parse_capture_point(Json::parse(line)));
    } catch (const std::exception& e) {
      ++load.rejected;
      load.diagnostics.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return load;
}

SpatialGrid::SpatialGrid(const std::vector<CapturePoint>& points, double radius_m)
    : points_(points), radius_m_(radius_m) {
  if (!(radius_m > 0.0)) throw Error("radius must be positive");
  // Slightly oversized cells keep the 3x3 neighborhood conservative.
  cell_lat_deg_ = 1.01 * radius_m / (kEarthRadiusM * std::numbers::pi / 180.0);
  double max_abs_lat = 0.0;
  for (const auto& p : points) max_abs_lat = std::max(max_abs_lat, std::abs(p.lat));
  const double c = std::cos(std::min(max_abs_lat + cell_lat_deg_, 90.0) * std::numbers::pi / 180.0);
  cell_lon_deg_ = c > 1e-6 ? std::min(360.0, cell_lat_deg_ / c) : 360.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    cells_[cell_of(points[i].lat, points[i].lon)].push_back(i);
}

std::pair<long long, long long> SpatialGrid::cell_of(double lat, double lon) const {
  return {static_cast<long long>(std::floor(lat / cell_lat_deg_)),
          static_cast<long long>(std::floor(lon / cell_lon_deg_))};
}

std::vector<std::size_t> SpatialGrid::within(double lat, double lon) const {
  std::vector<std::size_t> out;
  const auto [cy, cx] = cell_of(lat, lon);
  for (long long dy = -1; dy <= 1; ++dy) {
    for (long long dx = -1; dx <= 1; ++dx) {
      auto it = cells_.find({cy + dy, cx + dx});
      if (it == cells_.end()) continue;
      for (std::size_t i : it->second) {
        if (haversine_m(lat, lon, points_[i].lat, points_[i].lon) <= radius_m_) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::map<std::string, std::size_t> count_neighbors(const std::vector<CapturePoint>& points,
                                                   double radius_m) {
  const SpatialGrid grid(points, radius_m);
  std::map<std::string, std::size_t> counts;
  for (const auto& p : points) {
    const auto hits = grid.within(p.lat, p.lon);
    counts[p.id] = hits.empty() ? 0 : hits.size() - 1;
  }
  return counts;
}

std::vector<Location> select_locations_nms(const std::vector<CapturePoint>& points,
                                           const std::map<std::string, std::size_t>& counts,
                                           const NmsOptions& options) {
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (options.candidate_sample && *options.candidate_sample < order.size()) {
    // Canonicalize by id first so the sample does not depend on input order.
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return points[a].id < points[b].id; });
    std::mt19937_64 rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(*options.candidate_sample);
  }
  auto count_of = [&](std::size_t i) {
    auto it = counts.find(points[i].id);
    return it == counts.end() ? std::size_t{0} : it->second;
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = count_of(a), cb = count_of(b);
    if (ca != cb) return ca > cb;
    return points[a].id < points[b].id;
  });

  const SpatialGrid grid(points, options.suppression_radius_m);
  std::vector<bool> suppressed(points.size(), false);
  std::vector<Location> selected;
  for (std::size_t i : order) {
    if (suppressed[i]) continue;
    const auto& p = points[i];
    selected.push_back(Location{p.id, p.lat, p.lon, p.heading, count_of(i)});
    for (std::size_t j : grid.within(p.lat, p.lon)) suppressed[j] = true;
  }
  return selected;
}

std::vector<Location> select_locations_nms(const std::vector<CapturePoint>& points,
                                           double radius_m, std::uint64_t seed) {
  NmsOptions options;
  options.suppression_radius_m = radius_m;
  options.seed = seed;
  return select_locations_nms(points, count_neighbors(points, radius_m), options);
}

std::variant<ImageSequence, SequenceRejection> assemble_sequence(
    const Location& location, const std::vector<CapturePoint>& points, double radius_m,
    std::size_t min_images) {
  std::vector<const CapturePoint*> members;
  for (const auto& p : points) {
    if (haversine_m(location.lat, location.lon, p.lat, p.lon) <= radius_m) members.push_back(&p);
  }
  if (members.size() < min_images)
    return SequenceRejection{location.id, members.size(), min_images};
  std::sort(members.begin(), members.end(), [](const CapturePoint* a, const CapturePoint* b) {
    if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
    return a->id < b->id;
  });
  ImageSequence seq{location.id, location.lat, location.lon, {}};
  seq.images.reserve(members.size());
  for (const auto* p : members)
    seq.images.push_back(SequenceImage{p->id, p->image_uri, p->timestamp, p->heading});
  return seq;
}

Json to_json(const ImageSequence& seq) {
  Json images = Json::array();
  for (const auto& im : seq.images) {
    images.push_back(Json{{"point_id", im.point_id},
                          {"image_uri", im.image_uri},
                          {"timestamp", format_rfc3339(im.timestamp)},
                          {"heading", im.heading}});
  }
  return Json{{"location_id", seq.location_id},
              {"lat", seq.lat},
              {"lon", seq.lon},
              {"images", std::move(images)}};
}

ImageSequence sequence_from_json(const Json& j) {
  ImageSequence seq;
  seq.location_id = j.at("location_id").get<std::string>();
  seq.lat = j.at("lat").get<double>();
  seq.lon = j.at("lon").get<double>();
  for (const auto& im : j.at("images")) {
    seq.images.push_back(SequenceImage{im.at("point_id").get<std::string>(),
                                       im.at("image_uri").get<std::string>(),
                                       parse_rfc3339(im.at("timestamp").get<std::string>()),
                                       im.value("heading", 0.0)});
  }
  return seq;
}

Json to_json(const Location& loc) {
  return Json{{"id", loc.id},
              {"lat", loc.lat},
              {"lon", loc.lon},
              {"heading", loc.heading},
              {"neighbor_count", loc.neighbor_count}};
}

}  // namespace trendscope
