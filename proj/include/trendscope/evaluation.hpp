#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "trendscope/change_detection.hpp"
#include "trendscope/synthetic.hpp"
#include "trendscope/trends.hpp"

namespace trendscope {

/// Mean precision at the ranks of the positive items, ranking by score
/// descending with ties broken by original index. Throws without positives.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& labels);

struct LabeledPair {
  std::string location_id;
  int pair_index = 0;  // images pair_index and pair_index + 1 (1-based)
  bool has_change = false;
};

struct LabeledMembership {
  std::string trend_id;
  std::string change_id;
  bool belongs = false;
};

Json to_json(const LabeledPair& l);
LabeledPair labeled_pair_from_json(const Json& j);
Json to_json(const LabeledMembership& l);
LabeledMembership labeled_membership_from_json(const Json& j);

/// Score for one consecutive pair of a sequence (pair_index 1-based).
using PairDetector = std::function<double(const ImageSequence&, int pair_index)>;

/// Detector scoring 1 for pairs carrying a stored change and 0 otherwise.
PairDetector analyst_detector(const std::vector<ChangeRecord>& records);
/// Wraps an image-pair distance (HoG, color histogram, embeddings).
PairDetector distance_detector(ImagePairScorer scorer);

/// AP over every consecutive pair. Labels must cover all pairs; the error
/// lists the uncovered ones.
double eval_change_detection(const PairDetector& detector,
                             const std::vector<ImageSequence>& sequences,
                             const std::vector<LabeledPair>& labels);

using MembershipScorer = std::function<double(const LabeledMembership&)>;

double eval_membership(const MembershipScorer& scorer, const std::vector<LabeledMembership>& labels);

/// Ground-truth pair labels of a scripted world: a pair carries a change iff
/// a real planted change sits on its second image.
std::vector<LabeledPair> pair_labels_from_world(const std::vector<ImageSequence>& sequences,
                                                const SyntheticWorld& world);

/// Standard deviation of AP over random subsets holding `fraction` of the
/// items (subsets without positives are redrawn).
struct SubsetStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t subsets = 0;
};
SubsetStats subset_ap_stddev(const std::vector<double>& scores, const std::vector<bool>& labels,
                             std::size_t subsets, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Hybrid-verification worlds: proposals over a shared change pool, with an
// embedding distance and an oracle label per (proposal, change).

enum class WorldKind {
  random,       // labels and distances independent
  monotone,     // every positive strictly nearer than every negative
  noisy,        // positives nearer on average, heavy overlap
  informative,  // positives clearly nearer, per-proposal offset and spread
};

WorldKind world_kind_from_string(std::string_view s);
std::string_view to_string(WorldKind k);

struct WorldProposal {
  std::vector<double> distance;  // per pool item, in [0, 2]
  std::vector<bool> label;       // oracle answer per pool item
  std::size_t positives() const;
};

struct VerificationWorld {
  std::vector<std::string> change_ids;  // sort order equals index order
  std::vector<WorldProposal> proposals;
  std::size_t pool_size() const { return change_ids.size(); }
};

struct WorldSpec {
  WorldKind kind = WorldKind::informative;
  std::size_t pool_size = 3000;
  std::size_t proposals = 20;
  /// Positive counts are drawn around this value so that decisions at the
  /// evaluated N values are non-trivial.
  std::size_t typical_n = 100;
  std::uint64_t seed = 0;
};

VerificationWorld make_verification_world(const WorldSpec& spec);

/// Pool rows sorted by (distance, change id), truncated to k.
std::vector<std::size_t> ranked_shortlist(const VerificationWorld& world, std::size_t proposal,
                                          std::size_t k);

/// Hybrid verification of one world proposal against its label oracle.
VerificationResult verify_world_proposal(const VerificationWorld& world, std::size_t proposal,
                                         const VerifyOptions& options);

/// Exhaustive decision: oracle over the whole pool.
bool exhaustive_decision(const VerificationWorld& world, std::size_t proposal, std::size_t n);

struct ComparatorAccuracy {
  std::size_t n = 0;
  std::size_t k = 0;
  double all_true = 0.0;
  double threshold = 0.0;  // best of the grid, chosen with hindsight
  double threshold_value = 0.0;
  double rand_mllm = 0.0;
  double hybrid = 0.0;
};

inline constexpr std::size_t kThresholdGridSize = 1000;

/// Accuracy of each comparator against the exhaustive decision, per N, with
/// k = k_multiple * N.
std::vector<ComparatorAccuracy> eval_hybrid_accuracy(const VerificationWorld& world,
                                                     const std::vector<std::size_t>& n_values,
                                                     std::size_t k_multiple, std::uint64_t seed);

/// Hybrid accuracy for each k multiple (strict mode), per N.
std::map<std::size_t, std::vector<double>> ablate_k(const VerificationWorld& world,
                                                    const std::vector<std::size_t>& n_values,
                                                    const std::vector<std::size_t>& k_multiples);

/// Best-of-grid threshold comparator; exposed for its dominance property.
struct ThresholdSearch {
  std::vector<double> grid;
  std::vector<double> accuracy;  // per grid point
  std::size_t best = 0;
};
ThresholdSearch threshold_search(const VerificationWorld& world, std::size_t n,
                                 std::size_t grid_size = kThresholdGridSize);

struct BudgetReport {
  std::size_t pool_size = 0;
  std::size_t k = 0;
  std::size_t exhaustive_queries = 0;
  std::size_t max_hybrid_queries = 0;  // counted by a dry run
  double reduction_factor = 0.0;
};

/// Dry-run count of oracle calls: a counting oracle that never confirms
/// forces the worst case, so the hybrid scan consumes its whole shortlist.
BudgetReport budget_dry_run(std::size_t pool_size, std::size_t k, std::size_t n);

struct CriticStats {
  std::size_t records = 0;
  std::size_t true_records = 0;  // records matching a real planted change
  std::size_t real_planted = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Precision and recall of a change store against the world's planted
/// changes (matched by after image and descriptions).
CriticStats critic_stats(const std::vector<ChangeRecord>& records, const SyntheticWorld& world);

/// Renders a comparator table as aligned text.
std::string render_accuracy_table(const std::vector<ComparatorAccuracy>& rows);

}  // namespace trendscope
