#include "trendscope/change_detection.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

namespace trendscope {

ChangeRecord ground_change(const ImageSequence& sequence, const RawChange& change,
                           bool critic_passed) {
  const int n = static_cast<int>(sequence.images.size());
  if (change.after_index < 1 || change.after_index > n - 1)
    throw Error("change index " + std::to_string(change.after_index) + " outside sequence " +
                sequence.location_id);
  const auto& before = sequence.images[static_cast<std::size_t>(change.after_index - 1)];
  const auto& after = sequence.images[static_cast<std::size_t>(change.after_index)];
  ChangeRecord r;
  r.id = change_id(sequence.location_id, change.after_index, change.before_desc, change.after_desc);
  r.location_id = sequence.location_id;
  r.before_desc = change.before_desc;
  r.after_desc = change.after_desc;
  r.after_index = change.after_index;
  r.before_time = before.timestamp;
  r.after_time = after.timestamp;
  r.critic_passed = critic_passed;
  r.lat = sequence.lat;
  r.lon = sequence.lon;
  r.before_uri = before.image_uri;
  r.after_uri = after.image_uri;
  return r;
}

std::vector<ChangeRecord> dedup_changes(std::vector<ChangeRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ChangeRecord& a, const ChangeRecord& b) { return a.id < b.id; });
  records.erase(std::unique(records.begin(), records.end(),
                            [](const ChangeRecord& a, const ChangeRecord& b) { return a.id == b.id; }),
                records.end());
  return records;
}

std::vector<ChangeRecord> load_change_store(const std::filesystem::path& path) {
  std::vector<ChangeRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(change_from_json(j));
  return out;
}

void save_change_store(const std::filesystem::path& path, const std::vector<ChangeRecord>& records) {
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

namespace {

struct SequenceOutcome {
  bool poisoned = false;
  std::size_t detected = 0;
  std::size_t rejected = 0;
  std::vector<ChangeRecord> records;
  std::vector<std::string> diagnostics;
};

SequenceOutcome process_sequence(const ImageSequence& seq, AnalystGateway& gateway, bool critic) {
  SequenceOutcome out;
  auto detection = gateway.detect_changes(seq);
  if (!detection) {
    out.poisoned = true;
    out.diagnostics.push_back(seq.location_id + ": detection poisoned");
    return out;
  }
  out.diagnostics = std::move(detection->diagnostics);
  std::unordered_set<std::string> seen;
  for (const auto& raw : detection->changes) {
    ++out.detected;
    ChangeRecord rec = ground_change(seq, raw, false);
    if (!seen.insert(rec.id).second) continue;
    if (critic) {
      const auto& before = seq.images[static_cast<std::size_t>(raw.after_index - 1)];
      const auto& after = seq.images[static_cast<std::size_t>(raw.after_index)];
      if (!gateway.self_critic(raw, before, after)) {
        ++out.rejected;
        continue;
      }
      rec.critic_passed = true;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

Stage1Result run_stage1(const std::vector<ImageSequence>& sequences, AnalystGateway& gateway,
                        const Stage1Options& options) {
  {
    std::unordered_set<std::string> ids;
    for (const auto& s : sequences)
      if (!ids.insert(s.location_id).second)
        throw Error("duplicate sequence for location " + s.location_id);
  }
  Stage1Result result;
  const bool durable = !options.store_dir.empty();
  const auto part_path = options.store_dir / kChangePartFile;
  const auto checkpoint_path = options.store_dir / kStage1CheckpointFile;

  std::map<std::string, std::string> done;  // location_id -> status
  std::vector<ChangeRecord> records;
  if (durable) {
    std::filesystem::create_directories(options.store_dir);
    for (const auto& j : read_jsonl_tolerant(checkpoint_path))
      done[j.at("location_id").get<std::string>()] = j.at("status").get<std::string>();
    // Records whose sequence never reached the checkpoint are dropped; the
    // sequence will be reprocessed.
    for (const auto& j : read_jsonl_tolerant(part_path)) {
      auto rec = change_from_json(j);
      if (done.count(rec.location_id)) records.push_back(std::move(rec));
    }
  }

  std::vector<const ImageSequence*> pending;
  for (const auto& s : sequences) {
    if (auto it = done.find(s.location_id); it != done.end()) {
      ++result.resumed;
      if (it->second == "poisoned") {
        ++result.poisoned;
        result.poisoned_locations.push_back(s.location_id);
      }
      continue;
    }
    pending.push_back(&s);
  }
  const std::size_t budget = options.max_sequences.value_or(pending.size());
  const bool stops_early = budget < pending.size();
  if (stops_early) pending.resize(budget);

  std::mutex mu;
  const std::size_t width = options.workers ? options.workers : gateway.max_in_flight();
  parallel_for(pending.size(), width, [&](std::size_t i) {
    const ImageSequence& seq = *pending[i];
    SequenceOutcome out = process_sequence(seq, gateway, options.critic_enabled);
    std::lock_guard lock(mu);
    if (durable) {
      std::vector<Json> rows;
      for (const auto& r : out.records) rows.push_back(to_json(r));
      append_jsonl_durable(part_path, rows);
      append_jsonl_durable(checkpoint_path,
                           {Json{{"location_id", seq.location_id},
                                 {"status", out.poisoned ? "poisoned" : "done"}}});
    }
    done[seq.location_id] = out.poisoned ? "poisoned" : "done";
    ++result.processed;
    result.detected += out.detected;
    result.critic_rejected += out.rejected;
    if (out.poisoned) {
      ++result.poisoned;
      result.poisoned_locations.push_back(seq.location_id);
    }
    for (auto& d : out.diagnostics) result.diagnostics.push_back(std::move(d));
    for (auto& r : out.records) records.push_back(std::move(r));
  });

  std::sort(result.poisoned_locations.begin(), result.poisoned_locations.end());
  std::sort(result.diagnostics.begin(), result.diagnostics.end());
  result.records = dedup_changes(std::move(records));
  result.complete = !stops_early;
  if (durable && result.complete) {
    // Compact the journals into canonical order so finished runs are byte-stable.
    std::vector<Json> part, checkpoint;
    for (const auto& r : result.records) part.push_back(to_json(r));
    for (const auto& s : sequences)
      checkpoint.push_back(Json{{"location_id", s.location_id}, {"status", done.at(s.location_id)}});
    write_jsonl(part_path, part);
    write_jsonl(checkpoint_path, checkpoint);
    save_change_store(options.store_dir / kChangeStoreFile, result.records);
  }
  return result;
}

std::set<PairKey> pairs_with_changes(const std::vector<ChangeRecord>& records) {
  std::set<PairKey> out;
  for (const auto& r : records) out.emplace(r.location_id, r.after_index);
  return out;
}

std::vector<PairScore> score_pairs(const std::vector<ImageSequence>& sequences,
                                   const ImagePairScorer& scorer, std::size_t workers) {
  std::vector<std::pair<std::size_t, std::size_t>> jobs;  // (sequence, 0-based first image)
  for (std::size_t s = 0; s < sequences.size(); ++s)
    for (std::size_t i = 0; i + 1 < sequences[s].images.size(); ++i) jobs.emplace_back(s, i);
  std::vector<PairScore> out(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto [s, i] = jobs[j];
    const auto& seq = sequences[s];
    out[j] = PairScore{seq.location_id, static_cast<int>(i) + 1,
                       scorer(seq.images[i], seq.images[i + 1])};
  });
  return out;
}

ImagePairScorer hog_scorer(HogParams params) {
  return [params](const SequenceImage& a, const SequenceImage& b) {
    return hog_pair_score(load_image(a.image_uri), load_image(b.image_uri), params);
  };
}

ImagePairScorer color_hist_scorer() {
  return [](const SequenceImage& a, const SequenceImage& b) {
    return color_hist_pair_score(load_image(a.image_uri), load_image(b.image_uri));
  };
}

namespace {

EmbeddingVector<float> image_vector(const std::string& uri, AnalystGateway& gateway,
                                    EmbeddingPairMode mode) {
  if (mode == EmbeddingPairMode::image_vector) return gateway.embed_image(uri);
  auto caption = gateway.caption_image(uri);
  if (!caption) throw PoisonedRequest("caption request poisoned for " + uri);
  if (caption->empty()) throw Error("empty caption for " + uri);
  return gateway.embed_text(*caption);
}

}  // namespace

double embedding_pair_score(const std::string& image_a, const std::string& image_b,
                            AnalystGateway& gateway, EmbeddingPairMode mode) {
  const auto a = image_vector(image_a, gateway, mode);
  const auto b = image_vector(image_b, gateway, mode);
  return cosine_distance(a, b);
}

ImagePairScorer embedding_scorer(AnalystGateway& gateway, EmbeddingPairMode mode) {
  return [&gateway, mode](const SequenceImage& a, const SequenceImage& b) {
    return embedding_pair_score(a.image_uri, b.image_uri, gateway, mode);
  };
}

}  // namespace trendscope
