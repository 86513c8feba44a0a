#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "support.hpp"
#include "trendscope/corpus.hpp"

using namespace trendscope;

namespace {

CapturePoint point(std::string id, double lat, double lon, Timestamp t = testing::day(2020, 1, 1)) {
  CapturePoint p;
  p.id = std::move(id);
  p.lat = lat;
  p.lon = lon;
  p.timestamp = t;
  p.image_uri = "file:///img/" + p.id + ".jpg";
  return p;
}

// Point `meters` north of (lat, lon).
CapturePoint north_of(std::string id, double lat, double lon, double meters) {
  return point(std::move(id), lat + meters / testing::kMetersPerDegLat, lon);
}

}  // namespace

TEST_CASE("manifest ingestion counts valid and rejected lines") {
  const auto dir = testing::scratch_dir("manifest");
  SUBCASE("empty file") {
    write_file_atomic(dir / "m.jsonl", "");
    const auto load = ingest_manifest(dir / "m.jsonl");
    CHECK(load.points.empty());
    CHECK(load.rejected == 0);
  }
  SUBCASE("three valid and one malformed") {
    std::string body;
    for (int i = 0; i < 3; ++i)
      body += to_json(point("p" + std::to_string(i), 37.0 + i * 1e-3, -122.0)).dump() + "\n";
    body += "{\"id\": \"broken\", \"lat\": \n";
    write_file_atomic(dir / "m.jsonl", body);
    const auto load = ingest_manifest(dir / "m.jsonl");
    CHECK(load.points.size() == 3);
    CHECK(load.rejected == 1);
    REQUIRE(load.diagnostics.size() == 1);
    CHECK(load.diagnostics[0].rfind("line 4", 0) == 0);
  }
  SUBCASE("latitude out of range") {
    auto j = to_json(point("bad", 37.0, -122.0));
    j["lat"] = 91.0;
    write_file_atomic(dir / "m.jsonl", j.dump() + "\n" + to_json(point("ok", 37.0, -122.0)).dump() + "\n");
    const auto load = ingest_manifest(dir / "m.jsonl");
    CHECK(load.points.size() == 1);
    CHECK(load.rejected == 1);
  }
  SUBCASE("unreadable file is fatal") {
    CHECK_THROWS_AS(ingest_manifest(dir / "missing.jsonl"), Error);
  }
}

TEST_CASE("haversine agrees with an independent implementation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180), off(-0.001, 0.001);
  for (int i = 0; i < 1000; ++i) {
    const double a = lat(rng), b = lon(rng);
    const double c = a + off(rng), d = b + off(rng);
    CHECK(haversine_m(a, b, c, d) == doctest::Approx(testing::reference_haversine(a, b, c, d)).epsilon(1e-9));
  }
}

TEST_CASE("neighbor counts exclude the point itself") {
  SUBCASE("single point") {
    const auto counts = count_neighbors({point("a", 37.0, -122.0)}, 1.8);
    CHECK(counts.at("a") == 0);
  }
  SUBCASE("1 m apart") {
    const std::vector pts{point("a", 37.0, -122.0), north_of("b", 37.0, -122.0, 1.0)};
    REQUIRE(testing::reference_haversine(pts[0].lat, pts[0].lon, pts[1].lat, pts[1].lon) ==
            doctest::Approx(1.0).epsilon(1e-6));
    const auto counts = count_neighbors(pts, 1.8);
    CHECK(counts.at("a") == 1);
    CHECK(counts.at("b") == 1);
  }
  SUBCASE("5 m apart") {
    const std::vector pts{point("a", 37.0, -122.0), north_of("b", 37.0, -122.0, 5.0)};
    const auto counts = count_neighbors(pts, 1.8);
    CHECK(counts.at("a") == 0);
    CHECK(counts.at("b") == 0);
  }
  SUBCASE("brute force on random clouds") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> m(0.0, 20.0);
    std::vector<CapturePoint> pts;
    for (int i = 0; i < 300; ++i)
      pts.push_back(point("p" + std::to_string(i), 37.0 + m(rng) / testing::kMetersPerDegLat,
                          -122.0 + m(rng) / (testing::kMetersPerDegLat * std::cos(37.0 * std::numbers::pi / 180))));
    const auto counts = count_neighbors(pts, 1.8);
    for (const auto& p : pts) {
      std::size_t expect = 0;
      for (const auto& q : pts)
        if (&p != &q && testing::reference_haversine(p.lat, p.lon, q.lat, q.lon) <= 1.8) ++expect;
      CHECK(counts.at(p.id) == expect);
    }
  }
}

TEST_CASE("greedy suppression keeps the strongest seeds") {
  NmsOptions opt;
  opt.suppression_radius_m = 1.8;
  SUBCASE("two near, one far") {
    const std::vector pts{point("A", 37.0, -122.0), north_of("B", 37.0, -122.0, 1.0),
                          north_of("C", 37.0, -122.0, 100.0)};
    const std::map<std::string, std::size_t> counts{{"A", 30}, {"B", 25}, {"C", 12}};
    const auto locs = select_locations_nms(pts, counts, opt);
    REQUIRE(locs.size() == 2);
    CHECK(locs[0].id == "A");
    CHECK(locs[1].id == "C");
  }
  SUBCASE("single point") {
    const std::vector pts{point("only", 37.0, -122.0)};
    const auto locs = select_locations_nms(pts, count_neighbors(pts, 1.8), opt);
    REQUIRE(locs.size() == 1);
    CHECK(locs[0].id == "only");
  }
  SUBCASE("coincident points") {
    const std::vector pts{point("c", 37.0, -122.0), point("a", 37.0, -122.0), point("b", 37.0, -122.0)};
    const auto locs = select_locations_nms(pts, count_neighbors(pts, 1.8), opt);
    REQUIRE(locs.size() == 1);
    CHECK(locs[0].id == "a");
  }
}

TEST_CASE("suppression separates locations and is deterministic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> m(0.0, 15.0);
    std::vector<CapturePoint> pts;
    for (int i = 0; i < 200; ++i)
      pts.push_back(north_of("p" + std::to_string(i), 37.0, -122.0 + m(rng) * 1e-5, m(rng)));
    NmsOptions opt;
    opt.suppression_radius_m = 3.6;
    opt.seed = seed;
    if (seed % 2) opt.candidate_sample = 50;
    const auto counts = count_neighbors(pts, 1.8);
    const auto a = select_locations_nms(pts, counts, opt);
    const auto b = select_locations_nms(pts, counts, opt);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]).dump() == to_json(b[i]).dump());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = i + 1; j < a.size(); ++j)
        CHECK(testing::reference_haversine(a[i].lat, a[i].lon, a[j].lat, a[j].lon) > 3.6);
  }
}

TEST_CASE("sequence assembly sorts, filters and rejects") {
  Location loc{"L", 37.0, -122.0, 0.0, 0};
  SUBCASE("shuffled timestamps come out ascending") {
    std::vector<CapturePoint> pts;
    std::vector<int> days(12);
    std::iota(days.begin(), days.end(), 1);
    std::shuffle(days.begin(), days.end(), std::mt19937_64(3));
    for (int i = 0; i < 12; ++i)
      pts.push_back(point("p" + std::to_string(i), 37.0, -122.0, testing::day(2020, 1, days[i])));
    pts.push_back(north_of("far", 37.0, -122.0, 10.0));
    const auto r = assemble_sequence(loc, pts, 1.8, 10);
    REQUIRE(std::holds_alternative<ImageSequence>(r));
    const auto& seq = std::get<ImageSequence>(r);
    REQUIRE(seq.images.size() == 12);
    for (std::size_t i = 1; i < seq.images.size(); ++i)
      CHECK(seq.images[i - 1].timestamp < seq.images[i].timestamp);
  }
  SUBCASE("nine images are rejected") {
    std::vector<CapturePoint> pts;
    for (int i = 0; i < 9; ++i) pts.push_back(point("p" + std::to_string(i), 37.0, -122.0, testing::day(2020, 1, i + 1)));
    const auto r = assemble_sequence(loc, pts, 1.8, 10);
    REQUIRE(std::holds_alternative<SequenceRejection>(r));
    CHECK(std::get<SequenceRejection>(r).image_count == 9);
  }
  SUBCASE("equal timestamps order by id") {
    std::vector<CapturePoint> pts{point("z", 37.0, -122.0), point("m", 37.0, -122.0), point("a", 37.0, -122.0)};
    const auto r = assemble_sequence(loc, pts, 1.8, 2);
    const auto& seq = std::get<ImageSequence>(r);
    CHECK(seq.images[0].point_id == "a");
    CHECK(seq.images[1].point_id == "m");
    CHECK(seq.images[2].point_id == "z");
  }
  SUBCASE("sequence json round trip") {
    std::vector<CapturePoint> pts{point("a", 37.0, -122.0), point("b", 37.0, -122.0, testing::day(2021, 5, 2))};
    const auto seq = std::get<ImageSequence>(assemble_sequence(loc, pts, 1.8, 2));
    CHECK(to_json(sequence_from_json(to_json(seq))).dump() == to_json(seq).dump());
  }
}
