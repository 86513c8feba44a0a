#pragma once

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <string>

#include <unistd.h>

#include "trendscope/gateway.hpp"
#include "trendscope/synthetic.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("trendscope-test-" + name + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline trendscope::GatewayOptions fast_options(std::size_t max_in_flight = 4) {
  trendscope::GatewayOptions o;
  o.max_in_flight = max_in_flight;
  o.retry.max_attempts = 2;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  return o;
}

struct ScriptedAnalyst {
  std::shared_ptr<trendscope::SyntheticBackend> backend;
  std::unique_ptr<trendscope::AnalystGateway> gateway;
};

inline ScriptedAnalyst scripted(trendscope::SyntheticWorld world, std::size_t max_in_flight = 4) {
  ScriptedAnalyst a;
  a.backend = std::make_shared<trendscope::SyntheticBackend>(std::move(world));
  a.gateway = std::make_unique<trendscope::AnalystGateway>(
      a.backend, trendscope::PromptLibrary::load_default(), fast_options(max_in_flight));
  return a;
}

inline constexpr double kMetersPerDegLat = 6'371'000.0 * std::numbers::pi / 180.0;

/// Independent haversine used as an oracle against the library's own.
inline double reference_haversine(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double a = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
  return 2 * 6'371'000.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

inline trendscope::Timestamp day(int y, unsigned m, unsigned d, int hour = 12) {
  using namespace std::chrono;
  return time_point_cast<seconds>(sys_days{year{y} / month{m} / std::chrono::day{d}} + hours{hour});
}

}  // namespace testing
