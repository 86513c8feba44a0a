#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trendscope/common.hpp"

namespace trendscope {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kDefaultGroupingRadiusM = 1.8;
inline constexpr std::size_t kDefaultMinImages = 10;

/// Great-circle distance in meters (haversine).
double haversine_m(double lat1, double lon1, double lat2, double lon2);

struct CapturePoint {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  Timestamp timestamp{};
  std::string image_uri;
  double heading = 0.0;
};

struct Location {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  double heading = 0.0;
  std::size_t neighbor_count = 0;
};

struct SequenceImage {
  std::string point_id;
  std::string image_uri;
  Timestamp timestamp{};
  double heading = 0.0;
};

struct ImageSequence {
  std::string location_id;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<SequenceImage> images;
};

struct SequenceRejection {
  std::string location_id;
  std::size_t image_count = 0;
  std::size_t min_images = 0;
};

struct ManifestLoad {
  std::vector<CapturePoint> points;
  std::size_t rejected = 0;
  std::vector<std::string> diagnostics;  // "line N: reason"
};

/// Parses one manifest record; throws Error describing the defect.
CapturePoint parse_capture_point(const Json& record);
Json to_json(const CapturePoint& p);

/// Loads a newline-delimited manifest. An unreadable file throws; malformed
/// or out-of-range lines are skipped and counted.
ManifestLoad ingest_manifest(const std::filesystem::path& path);

/// Number of *other* points within radius_m of each point, keyed by id.
std::map<std::string, std::size_t> count_neighbors(const std::vector<CapturePoint>& points,
                                                   double radius_m);

struct NmsOptions {
  double suppression_radius_m = 2.0 * kDefaultGroupingRadiusM;
  /// When set, only a seeded random subset of this many points is eligible
  /// as a location seed (all points still count as neighbors).
  std::optional<std::size_t> candidate_sample;
  std::uint64_t seed = 0;
};

/// Greedy non-maximum suppression over points ranked by neighbor count
/// (descending, ties by id). Output order is selection order.
std::vector<Location> select_locations_nms(const std::vector<CapturePoint>& points,
                                           const std::map<std::string, std::size_t>& counts,
                                           const NmsOptions& options);

/// Counts neighbors at radius_m and suppresses at the same radius.
std::vector<Location> select_locations_nms(const std::vector<CapturePoint>& points,
                                           double radius_m, std::uint64_t seed);

std::variant<ImageSequence, SequenceRejection> assemble_sequence(
    const Location& location, const std::vector<CapturePoint>& points, double radius_m,
    std::size_t min_images = kDefaultMinImages);

Json to_json(const ImageSequence& seq);
ImageSequence sequence_from_json(const Json& j);
Json to_json(const Location& loc);

/// Grid hash over lat/lon for radius queries. Cells are sized so that any
/// point within radius_m lies in the 3x3 block around the query cell.
class SpatialGrid {
 public:
  SpatialGrid(const std::vector<CapturePoint>& points, double radius_m);

  /// Indices of points within radius_m of (lat, lon), ascending.
  std::vector<std::size_t> within(double lat, double lon) const;

 private:
  std::pair<long long, long long> cell_of(double lat, double lon) const;

  const std::vector<CapturePoint>& points_;
  double radius_m_;
  double cell_lat_deg_;
  double cell_lon_deg_;
  std::map<std::pair<long long, long long>, std::vector<std::size_t>> cells_;
};

}  // namespace trendscope
