#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trendscope/corpus.hpp"
#include "trendscope/gateway.hpp"

namespace trendscope {

/// A change the scripted analyst reports when it sees `after_uri` directly
/// after its predecessor in a sequence.
struct PlantedChange {
  std::string after_uri;
  std::string before;
  std::string after;
  bool real = true;            // false: a hallucination the detector still reports
  bool detected = true;        // false: a real change the detector misses
  bool critic_accepts = true;  // the self-critic's verdict on this report
};

/// Embedding and membership script for one text. The vector is the unit
/// anchor of `topic` perturbed by `jitter` along a text-specific direction;
/// membership holds when a trend's topic is among the change's tags.
struct TextScript {
  std::string topic;
  std::vector<std::string> tags;  // always contains topic
  double jitter = 0.0;
};

struct AbstractionScript {
  std::vector<std::string> places;
  std::vector<std::string> changes;
  std::vector<std::string> texts;  // places x changes, row-major
};

/// The scripted world behind the synthetic analyst. Deterministic: every
/// answer is a pure function of the script and the request.
class SyntheticWorld {
 public:
  int dim = 64;
  std::uint64_t seed = 0;
  std::vector<PlantedChange> changes;
  std::map<std::string, TextScript> texts;                   // key: normalized text
  std::map<std::string, AbstractionScript> abstractions;     // key: normalized change text
  std::map<std::pair<std::string, std::string>, bool> memberships;  // normalized (change, trend)
  std::map<std::string, std::vector<std::string>> findings;  // image uri -> unusual findings
  std::map<std::string, std::vector<float>> image_vectors;
  std::map<std::string, std::string> captions;
  std::set<std::string> failing_uris;   // requests touching these images fail transiently
  std::set<std::string> failing_texts;  // normalized texts whose embedding fails
  bool unavailable = false;
  int latency_ms = 0;

  void add_text(const std::string& text, const std::string& topic, double jitter,
                std::vector<std::string> extra_tags = {});
  void add_abstractions(const std::string& before, const std::string& after,
                        AbstractionScript script);

  EmbeddingVector<float> text_embedding(const std::string& text) const;
  bool belongs(const std::string& change_text, const std::string& trend_text) const;
  const TextScript* script_for(const std::string& text) const;

  /// Index from after_uri to planted changes (rebuilt on demand).
  std::vector<const PlantedChange*> changes_at(const std::string& after_uri) const;

  Json to_json() const;
  static SyntheticWorld from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  static SyntheticWorld load(const std::filesystem::path& path);

 private:
  mutable std::map<std::string, std::vector<std::size_t>> by_uri_;
  mutable std::size_t indexed_count_ = 0;
};

/// Unit vector derived only from (key, seed, dim); used for topic anchors and
/// per-text jitter directions.
EmbeddingVector<float> seeded_unit_vector(std::string_view key, int dim, std::uint64_t seed);

/// Scripted analyst over a SyntheticWorld.
class SyntheticBackend : public AnalystBackend {
 public:
  explicit SyntheticBackend(SyntheticWorld world);

  std::string complete(const AnalystRequest& request, const std::string& prompt) override;
  EmbeddingVector<float> embed_text(const std::string& text) override;
  EmbeddingVector<float> embed_image(const std::string& image_uri) override;

  const SyntheticWorld& world() const { return world_; }
  SyntheticWorld& mutable_world() { return world_; }
  std::size_t calls(RequestKind kind) const;
  std::size_t embed_calls() const { return embed_calls_.load(); }

 private:
  void maybe_fail(const AnalystRequest& request) const;
  std::string answer_detection(const AnalystRequest& request) const;
  std::string answer_critic(const AnalystRequest& request) const;
  std::string answer_abstractions(const AnalystRequest& request) const;
  std::string answer_membership(const AnalystRequest& request) const;
  std::string answer_unusual(const AnalystRequest& request) const;

  SyntheticWorld world_;
  std::array<std::atomic<std::size_t>, 6> calls_{};
  std::atomic<std::size_t> embed_calls_{0};
};

// ---------------------------------------------------------------------------
// Synthetic city generation

struct CityRecipe {
  std::uint64_t seed = 7;
  int dim = 64;
  std::vector<std::size_t> trend_sizes;       // changes per planted (frequent) trend
  std::vector<std::size_t> distractor_sizes;  // changes per sub-threshold group
  std::size_t singleton_changes = 0;          // unrelated one-off changes
  std::size_t empty_locations = 0;            // locations without any change
  std::vector<std::size_t> unusual_trend_sizes;  // images per planted unusual finding
  std::size_t unusual_singletons = 0;
  /// Fraction of detector output lines that are hallucinations.
  double hallucination_rate = 0.0;
  /// Fraction of hallucinations the critic fails to catch.
  double critic_escape_rate = 0.0;
  /// Fraction of real changes the critic wrongly discards.
  double critic_false_reject_rate = 0.0;
  /// Fraction of real changes the detector never reports.
  double miss_rate = 0.0;
  double jitter = 0.25;
  std::size_t images_min = 10;
  std::size_t images_max = 14;
  double origin_lat = 37.7700;
  double origin_lon = -122.4200;
  double spacing_m = 30.0;
  int first_year = 2011;
  int last_year = 2023;
};

struct PlantedTrend {
  std::string topic;
  std::string trend_text;
  bool frequent = false;  // planted at or above the frequency threshold
  std::vector<std::string> after_uris;
  std::vector<std::pair<double, double>> coordinates;  // location centers (lat, lon)
};

struct SyntheticCity {
  std::vector<CapturePoint> points;
  SyntheticWorld world;
  std::vector<PlantedTrend> trends;         // change trends (frequent and distractor)
  std::vector<PlantedTrend> unusual_trends;  // single-image findings
  Json truth_json() const;
};

SyntheticCity generate_city(const CityRecipe& recipe);

}  // namespace trendscope
