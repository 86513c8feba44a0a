#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trendscope/corpus.hpp"
#include "trendscope/gateway.hpp"
#include "trendscope/image.hpp"
#include "trendscope/records.hpp"

namespace trendscope {

struct Stage1Options {
  bool critic_enabled = true;
  /// Where the part log, checkpoint and final store live. Empty: run in
  /// memory without checkpoints.
  std::filesystem::path store_dir;
  /// Process at most this many not-yet-checkpointed sequences, then stop
  /// (used to simulate interruptions).
  std::optional<std::size_t> max_sequences;
  /// Worker count; 0 means the gateway's max_in_flight.
  std::size_t workers = 0;
};

struct Stage1Result {
  std::vector<ChangeRecord> records;  // sorted by id, duplicates collapsed
  std::size_t processed = 0;          // sequences handled in this call
  std::size_t resumed = 0;            // sequences skipped thanks to the checkpoint
  std::size_t poisoned = 0;           // sequences whose detection request was poisoned
  std::size_t detected = 0;           // grounded raw changes before the critic
  std::size_t critic_rejected = 0;
  std::vector<std::string> poisoned_locations;
  std::vector<std::string> diagnostics;
  bool complete = false;  // every sequence is checkpointed
};

inline constexpr const char* kChangeStoreFile = "changes.jsonl";
inline constexpr const char* kChangePartFile = "changes.part.jsonl";
inline constexpr const char* kStage1CheckpointFile = "stage1.checkpoint.jsonl";

/// Detect changes in every sequence, optionally self-critique them, and
/// collapse duplicates. With a store_dir the run is checkpointed per
/// sequence and resumes where an earlier call stopped; the final store is
/// written once every sequence is done.
Stage1Result run_stage1(const std::vector<ImageSequence>& sequences, AnalystGateway& gateway,
                        const Stage1Options& options = {});

/// Grounds a raw change in its sequence (timestamps, uris, coordinates).
ChangeRecord ground_change(const ImageSequence& sequence, const RawChange& change,
                           bool critic_passed);

std::vector<ChangeRecord> load_change_store(const std::filesystem::path& path);
void save_change_store(const std::filesystem::path& path, const std::vector<ChangeRecord>& records);

/// Sorts by id and keeps the first record per id.
std::vector<ChangeRecord> dedup_changes(std::vector<ChangeRecord> records);

using PairKey = std::pair<std::string, int>;  // (location_id, pair index i: images i and i+1)

/// Image pairs carrying at least one change; multiplicity is discarded.
std::set<PairKey> pairs_with_changes(const std::vector<ChangeRecord>& records);

struct PairScore {
  std::string location_id;
  int pair_index = 0;
  double score = 0.0;
};

/// Distance between two images of a sequence; larger means more change.
using ImagePairScorer = std::function<double(const SequenceImage&, const SequenceImage&)>;

/// One score per consecutive pair, pair_index 1-based.
std::vector<PairScore> score_pairs(const std::vector<ImageSequence>& sequences,
                                   const ImagePairScorer& scorer, std::size_t workers = 1);

ImagePairScorer hog_scorer(HogParams params = {});
ImagePairScorer color_hist_scorer();

enum class EmbeddingPairMode { image_vector, caption };

/// Cosine distance between per-image vectors: the backend's image embedding,
/// or the text embedding of the analyst's caption. Throws PoisonedRequest
/// when the backend gives up.
double embedding_pair_score(const std::string& image_a, const std::string& image_b,
                            AnalystGateway& gateway, EmbeddingPairMode mode);
ImagePairScorer embedding_scorer(AnalystGateway& gateway, EmbeddingPairMode mode);

}  // namespace trendscope
