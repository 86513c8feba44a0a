#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trendscope/gateway.hpp"
#include "trendscope/index.hpp"
#include "trendscope/records.hpp"

namespace trendscope {

struct TrendProposal {
  std::string proposal_id;
  std::string text;
  std::vector<std::string> source_change_ids;  // distinct, ascending
  std::size_t member_count = 0;                // abstraction items in the cluster
  std::size_t word_count = 0;

  bool operator==(const TrendProposal&) const = default;
};

Json to_json(const TrendProposal& p);
TrendProposal proposal_from_json(const Json& j);

/// One abstraction text of one change; the clustering unit.
struct AbstractionItem {
  std::string change_id;
  std::size_t level = 0;  // position in the (place, change) grid
  std::string text;
};

struct ProposeOptions {
  double tight = kDefaultTightThreshold;
  double loose = kDefaultLooseThreshold;
  std::size_t min_members = 1500;  // clusters below k members are dropped
  std::optional<std::uint64_t> order_seed;
  std::size_t workers = 0;  // 0: gateway max_in_flight
};

struct ProposeResult {
  std::vector<TrendProposal> proposals;  // canopy order
  std::vector<AbstractionItem> items;
  std::size_t clusters = 0;  // before the size filter
  std::vector<std::string> diagnostics;
};

std::string make_proposal_id(std::string_view text);

/// Clusters already-embedded abstraction items. `vectors` holds one unit
/// column per item.
ProposeResult propose_from_items(std::vector<AbstractionItem> items,
                                 const EmbeddingMatrix<float>& vectors,
                                 const ProposeOptions& options);

/// Derives abstractions for every change, embeds them and clusters.
ProposeResult propose_trends(const std::vector<ChangeRecord>& changes, AnalystGateway& gateway,
                             const ProposeOptions& options);

/// Embedded change pool for verification; row r of the index is records[r].
class ChangePool {
 public:
  ChangePool() = default;
  ChangePool(std::vector<ChangeRecord> records, FlatIndex<float> index);

  /// Embeds change_text of every record. Records whose embedding is
  /// poisoned are left out and reported in `diagnostics`.
  static ChangePool build(std::vector<ChangeRecord> records, AnalystGateway& gateway,
                          std::size_t workers = 0, std::vector<std::string>* diagnostics = nullptr);

  const std::vector<ChangeRecord>& records() const { return records_; }
  const FlatIndex<float>& index() const { return index_; }
  std::size_t size() const { return records_.size(); }
  const ChangeRecord& at(std::size_t row) const { return records_.at(row); }

 private:
  std::vector<ChangeRecord> records_;
  FlatIndex<float> index_;
};

struct VerifyOptions {
  std::size_t k = 1500;
  std::size_t n = 500;
  /// Query all k neighbors even once the outcome is settled.
  bool strict = false;
  /// Membership queries issued concurrently per round.
  std::size_t fan_out = 1;
};

inline constexpr std::size_t kDefaultN = 500;
inline constexpr std::size_t kDefaultKMultiple = 3;

struct VerificationResult {
  std::string proposal_id;
  bool positive = false;
  std::vector<std::string> confirmed_change_ids;  // rank order
  std::size_t oracle_queries_used = 0;
  std::size_t failures = 0;
  std::string diagnostic;
};

Json to_json(const VerificationResult& r);
VerificationResult verification_from_json(const Json& j);

/// Membership answer for the neighbor at a shortlist rank.
using RankOracle = std::function<Verdict(std::size_t rank)>;

/// The hybrid decision over a distance-ranked shortlist (at most k ids).
/// Positive iff at least n neighbors are confirmed. Outside strict mode the
/// scan stops at the end of the round in which n confirmations are reached
/// or in which n became unreachable.
VerificationResult hybrid_verify(std::string proposal_id, const std::vector<std::string>& shortlist,
                                 const VerifyOptions& options, const RankOracle& oracle);

/// Embeds the proposal, takes its k nearest changes and asks the analyst.
VerificationResult verify_trend(const TrendProposal& proposal, const ChangePool& pool,
                                AnalystGateway& gateway, const VerifyOptions& options);

std::vector<VerificationResult> verify_all(const std::vector<TrendProposal>& proposals,
                                           const ChangePool& pool, AnalystGateway& gateway,
                                           const VerifyOptions& options, std::size_t workers = 1);

struct TimeWindow {
  Timestamp start{};
  Timestamp end{};
};

/// "YYYY-MM-DD..YYYY-MM-DD" or two RFC 3339 instants joined by "..". Date
/// ends are inclusive through the end of that day.
TimeWindow parse_time_window(std::string_view text);

/// Keeps changes whose before and after images both fall inside the window.
std::vector<ChangeRecord> filter_time(const std::vector<ChangeRecord>& changes,
                                      const TimeWindow& window);

struct SubjectFilterResult {
  std::vector<ChangeRecord> kept;  // store order
  std::size_t queried = 0;
  std::vector<std::string> diagnostics;
};

/// Embeds the subject sentence, takes the pool_size nearest changes and keeps
/// those the analyst places under the subject.
SubjectFilterResult filter_subject(const std::vector<ChangeRecord>& changes,
                                   const std::string& subject, std::size_t pool_size,
                                   AnalystGateway& gateway, std::size_t workers = 0);

enum class RankMode { most_detailed, period_delta, stratified_by_word_count };

RankMode rank_mode_from_string(std::string_view s);
std::string_view to_string(RankMode m);

/// proposal_id -> (members in pre-window, members in post-window).
using PeriodCounts = std::map<std::string, std::pair<std::size_t, std::size_t>>;

PeriodCounts period_counts(const std::vector<TrendProposal>& proposals,
                           const std::vector<ChangeRecord>& changes, const TimeWindow& pre,
                           const TimeWindow& post);

inline constexpr std::size_t kWordBucketWidth = 4;

/// Word-count bucket used by the stratified ranking: 1-4 words is bucket 0,
/// 5-8 bucket 1, and so on.
std::size_t word_bucket(std::size_t word_count, std::size_t width = kWordBucketWidth);

/// most_detailed: word_count descending. period_delta: post minus pre member
/// count, descending (needs `counts`). stratified: round-robin over word
/// buckets starting from the longest texts. Ties by proposal_id.
std::vector<TrendProposal> rank_proposals(std::vector<TrendProposal> proposals, RankMode mode,
                                          const PeriodCounts* counts = nullptr,
                                          std::size_t bucket_width = kWordBucketWidth);

/// Single-image findings as pseudo-changes (empty before, after_index 0),
/// deduplicated per location and finding.
struct UnusualResult {
  std::vector<ChangeRecord> records;
  std::size_t images = 0;
  std::size_t poisoned = 0;
};
UnusualResult unusual_query(const std::vector<ImageSequence>& sequences, AnalystGateway& gateway,
                            std::size_t workers = 0);

struct TrendRecord {
  TrendProposal proposal;
  VerificationResult verification;
};

void save_trend_store(const std::filesystem::path& path, const std::vector<TrendRecord>& trends);
std::vector<TrendRecord> load_trend_store(const std::filesystem::path& path);

void save_proposals(const std::filesystem::path& path, const std::vector<TrendProposal>& proposals);
std::vector<TrendProposal> load_proposals(const std::filesystem::path& path);

}  // namespace trendscope
