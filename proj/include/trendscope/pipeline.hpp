#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trendscope/common.hpp"
#include "trendscope/corpus.hpp"
#include "trendscope/index.hpp"
#include "trendscope/synthetic.hpp"

namespace trendscope {

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path backend_config;
  std::filesystem::path out_dir = "trendscope-out";
  std::filesystem::path prompt_dir;  // empty: bundled prompts

  double radius_m = kDefaultGroupingRadiusM;
  std::optional<double> suppression_radius_m;  // default 2 x radius_m
  std::optional<std::size_t> seed_sample;      // NMS candidate subset
  std::size_t min_images = kDefaultMinImages;

  bool critic_enabled = true;

  double tight = kDefaultTightThreshold;
  double loose = kDefaultLooseThreshold;
  std::size_t n = 500;
  std::optional<std::size_t> k;  // default k_multiple * n
  std::size_t k_multiple = 3;
  std::string ranking = "most_detailed";
  std::optional<std::size_t> verify_top;  // verify only the first M ranked proposals
  std::optional<std::string> pre_window;   // period_delta ranking
  std::optional<std::string> post_window;

  std::optional<std::string> time_window;
  std::optional<std::string> subject;
  std::optional<std::size_t> pool_size;
  bool unusual = false;

  std::filesystem::path pair_labels;  // eval: labeled image pairs (optional)

  std::optional<std::size_t> max_in_flight;  // overrides the backend config
  std::uint64_t seed = 0;
  bool fail_on_poison = false;

  std::size_t k_effective() const { return k.value_or(k_multiple * n); }
  double suppression_radius() const { return suppression_radius_m.value_or(2.0 * radius_m); }
  /// Throws Error describing the first invalid combination.
  void validate() const;
  Json to_json() const;
};

/// Result of one command. exit_code 0 means every stage invariant held.
struct CommandOutcome {
  int exit_code = 0;
  bool up_to_date = false;  // inputs unchanged: nothing was recomputed
  std::size_t poison_growth = 0;
  std::vector<std::string> messages;
  Json summary = Json::object();
};

inline constexpr int kExitMissingInput = 2;
inline constexpr int kExitPoison = 3;
inline constexpr int kExitInvariant = 4;

/// Thrown when an upstream artifact is absent; carries the exact path.
class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const std::filesystem::path& path)
      : Error("missing upstream artifact: " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

namespace artifacts {
std::filesystem::path locations(const RunConfig& c);
std::filesystem::path sequences(const RunConfig& c);
std::filesystem::path rejections(const RunConfig& c);
std::filesystem::path detect_dir(const RunConfig& c);
std::filesystem::path changes(const RunConfig& c);
std::filesystem::path abstractions(const RunConfig& c);
std::filesystem::path proposals(const RunConfig& c);
std::filesystem::path trends(const RunConfig& c);
std::filesystem::path pool_vectors(const RunConfig& c);
std::filesystem::path pool_ids(const RunConfig& c);
std::filesystem::path query_changes(const RunConfig& c);
std::filesystem::path query_proposals(const RunConfig& c);
std::filesystem::path query_trends(const RunConfig& c);
std::filesystem::path eval_report(const RunConfig& c);
std::filesystem::path eval_text(const RunConfig& c);
std::filesystem::path geojson(const RunConfig& c);
std::filesystem::path report_html(const RunConfig& c);
std::filesystem::path poison(const RunConfig& c);
}  // namespace artifacts

CommandOutcome cmd_ingest(const RunConfig& config);
CommandOutcome cmd_detect(const RunConfig& config);
CommandOutcome cmd_propose(const RunConfig& config);
CommandOutcome cmd_verify(const RunConfig& config);
CommandOutcome cmd_query(const RunConfig& config);
CommandOutcome cmd_eval(const RunConfig& config);

enum class ExportSource { verify, query };
CommandOutcome cmd_export(const RunConfig& config, ExportSource source = ExportSource::verify);

/// Writes manifest.jsonl, world.json, backend.json and truth.json for a
/// generated city into `dir`.
void write_synthetic_city(const SyntheticCity& city, const std::filesystem::path& dir,
                          std::size_t max_in_flight = 16);

}  // namespace trendscope
