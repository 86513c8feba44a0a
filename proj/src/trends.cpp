#include "trendscope/trends.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <unordered_map>

namespace trendscope {

Json to_json(const TrendProposal& p) {
  return Json{{"proposal_id", p.proposal_id},
              {"text", p.text},
              {"source_change_ids", p.source_change_ids},
              {"member_count", p.member_count},
              {"word_count", p.word_count}};
}

TrendProposal proposal_from_json(const Json& j) {
  TrendProposal p;
  p.proposal_id = j.at("proposal_id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.source_change_ids = j.value("source_change_ids", std::vector<std::string>{});
  p.member_count = j.value("member_count", std::size_t{0});
  p.word_count = j.value("word_count", split_words(p.text).size());
  if (trim(p.text).empty()) throw Error("proposal " + p.proposal_id + " has empty text");
  return p;
}

Json to_json(const VerificationResult& r) {
  Json j{{"proposal_id", r.proposal_id},
         {"decision", r.positive ? "positive" : "negative"},
         {"confirmed_change_ids", r.confirmed_change_ids},
         {"oracle_queries_used", r.oracle_queries_used},
         {"failures", r.failures}};
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

VerificationResult verification_from_json(const Json& j) {
  VerificationResult r;
  r.proposal_id = j.at("proposal_id").get<std::string>();
  const auto decision = j.at("decision").get<std::string>();
  if (decision != "positive" && decision != "negative") throw Error("bad decision: " + decision);
  r.positive = decision == "positive";
  r.confirmed_change_ids = j.value("confirmed_change_ids", std::vector<std::string>{});
  r.oracle_queries_used = j.value("oracle_queries_used", std::size_t{0});
  r.failures = j.value("failures", std::size_t{0});
  r.diagnostic = j.value("diagnostic", "");
  return r;
}

std::string make_proposal_id(std::string_view text) {
  return "t" + hex64(fnv1a64(normalize_text(text))).substr(0, 12);
}

ProposeResult propose_from_items(std::vector<AbstractionItem> items,
                                 const EmbeddingMatrix<float>& vectors,
                                 const ProposeOptions& options) {
  if (static_cast<Eigen::Index>(items.size()) != vectors.cols())
    throw Error("one vector per abstraction item required");
  ProposeResult result;
  result.items = std::move(items);
  if (result.items.empty()) return result;

  std::vector<std::string> ids;
  ids.reserve(result.items.size());
  for (const auto& it : result.items) ids.push_back(it.change_id + "#" + std::to_string(it.level));
  const auto index = FlatIndex<float>::from_matrix(std::move(ids), vectors);
  const auto canopies = canopy_cluster(index, options.tight, options.loose, options.order_seed);
  result.clusters = canopies.size();

  std::set<std::string> used_ids;
  for (const auto& c : canopies) {
    if (c.members.size() < options.min_members) continue;
    TrendProposal p;
    p.text = result.items[c.center].text;
    p.proposal_id = make_proposal_id(p.text);
    for (int suffix = 2; !used_ids.insert(p.proposal_id).second; ++suffix)
      p.proposal_id = make_proposal_id(p.text) + "-" + std::to_string(suffix);
    std::set<std::string> sources;
    for (auto m : c.members) sources.insert(result.items[m].change_id);
    p.source_change_ids.assign(sources.begin(), sources.end());
    p.member_count = c.members.size();
    p.word_count = split_words(p.text).size();
    result.proposals.push_back(std::move(p));
  }
  return result;
}

namespace {

std::size_t width_for(std::size_t requested, const AnalystGateway& gateway) {
  return requested ? requested : gateway.max_in_flight();
}

/// Embeds each distinct text once. Missing entries were poisoned.
std::unordered_map<std::string, EmbeddingVector<float>> embed_distinct(
    const std::vector<std::string>& texts, AnalystGateway& gateway, std::size_t workers,
    std::vector<std::string>& diagnostics) {
  std::vector<std::string> distinct(texts);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::optional<EmbeddingVector<float>>> vecs(distinct.size());
  parallel_for(distinct.size(), workers, [&](std::size_t i) {
    try {
      vecs[i] = gateway.embed_text(distinct[i]);
    } catch (const PoisonedRequest&) {
    }
  });
  std::unordered_map<std::string, EmbeddingVector<float>> out;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (vecs[i]) out.emplace(distinct[i], std::move(*vecs[i]));
    else diagnostics.push_back("embedding poisoned: " + distinct[i]);
  }
  return out;
}

}  // namespace

ProposeResult propose_trends(const std::vector<ChangeRecord>& changes, AnalystGateway& gateway,
                             const ProposeOptions& options) {
  const std::size_t workers = width_for(options.workers, gateway);
  std::vector<std::vector<std::string>> abstractions(changes.size());
  parallel_for(changes.size(), workers,
               [&](std::size_t i) { abstractions[i] = gateway.derive_abstractions(changes[i]); });

  std::vector<std::string> diagnostics;
  std::vector<AbstractionItem> items;
  for (std::size_t i = 0; i < changes.size(); ++i) {
    if (abstractions[i].empty()) diagnostics.push_back("no abstractions for change " + changes[i].id);
    for (std::size_t level = 0; level < abstractions[i].size(); ++level) {
      if (trim(abstractions[i][level]).empty()) continue;
      items.push_back(AbstractionItem{changes[i].id, level, abstractions[i][level]});
    }
  }

  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const auto& it : items) texts.push_back(it.text);
  const auto vectors = embed_distinct(texts, gateway, workers, diagnostics);
  std::erase_if(items, [&](const AbstractionItem& it) { return !vectors.count(it.text); });

  EmbeddingMatrix<float> matrix(vectors.empty() ? 0 : vectors.begin()->second.size(),
                                static_cast<Eigen::Index>(items.size()));
  for (std::size_t c = 0; c < items.size(); ++c)
    matrix.col(static_cast<Eigen::Index>(c)) = vectors.at(items[c].text);

  auto result = propose_from_items(std::move(items), matrix, options);
  for (auto& d : diagnostics) result.diagnostics.push_back(std::move(d));
  return result;
}

ChangePool::ChangePool(std::vector<ChangeRecord> records, FlatIndex<float> index)
    : records_(std::move(records)), index_(std::move(index)) {
  if (records_.size() != index_.size()) throw Error("change pool index does not match its records");
  for (std::size_t r = 0; r < records_.size(); ++r)
    if (records_[r].id != index_.id(r)) throw Error("change pool row mismatch at " + records_[r].id);
}

ChangePool ChangePool::build(std::vector<ChangeRecord> records, AnalystGateway& gateway,
                             std::size_t workers, std::vector<std::string>* diagnostics) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(change_text(r));
  std::vector<std::string> diags;
  const auto vectors = embed_distinct(texts, gateway, width_for(workers, gateway), diags);

  std::vector<ChangeRecord> kept;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!vectors.count(texts[i])) continue;
    ids.push_back(records[i].id);
    kept.push_back(std::move(records[i]));
  }
  const Eigen::Index dim = vectors.empty() ? 1 : vectors.begin()->second.size();
  EmbeddingMatrix<float> matrix(dim, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c)
    matrix.col(static_cast<Eigen::Index>(c)) = vectors.at(change_text(kept[c]));
  if (diagnostics) diagnostics->insert(diagnostics->end(), diags.begin(), diags.end());
  return ChangePool(std::move(kept), FlatIndex<float>::from_matrix(std::move(ids), std::move(matrix)));
}

VerificationResult hybrid_verify(std::string proposal_id, const std::vector<std::string>& shortlist,
                                 const VerifyOptions& options, const RankOracle& oracle) {
  if (options.n < 1 || options.k < options.n) throw Error("verification needs k >= N >= 1");
  VerificationResult result;
  result.proposal_id = std::move(proposal_id);
  const std::size_t len = std::min(shortlist.size(), options.k);
  const std::size_t fan = std::max<std::size_t>(1, options.fan_out);
  std::size_t yes = 0, pos = 0;
  std::vector<Verdict> round;
  while (pos < len) {
    if (!options.strict && (yes >= options.n || yes + (len - pos) < options.n)) break;
    const std::size_t end = std::min(len, pos + fan);
    round.assign(end - pos, Verdict::failed);
    parallel_for(end - pos, fan, [&](std::size_t i) { round[i] = oracle(pos + i); });
    for (std::size_t i = 0; i < round.size(); ++i) {
      if (round[i] == Verdict::yes) {
        ++yes;
        result.confirmed_change_ids.push_back(shortlist[pos + i]);
      } else if (round[i] == Verdict::failed) {
        ++result.failures;
      }
    }
    pos = end;
  }
  result.oracle_queries_used = pos;
  result.positive = yes >= options.n;
  if (!result.positive) {
    if (len < options.n) {
      result.diagnostic = "only " + std::to_string(len) + " candidates; N cannot be reached";
    } else if (result.failures > len - options.n) {
      result.diagnostic = "membership queries failed on " + std::to_string(result.failures) + " of " +
                          std::to_string(len) + " neighbors; N cannot be reached";
    } else if (result.failures > 0) {
      result.diagnostic = std::to_string(result.failures) + " membership queries failed";
    }
  }
  return result;
}

VerificationResult verify_trend(const TrendProposal& proposal, const ChangePool& pool,
                                AnalystGateway& gateway, const VerifyOptions& options) {
  if (options.n < 1 || options.k < options.n) throw Error("verification needs k >= N >= 1");
  if (pool.size() == 0) {
    VerificationResult r;
    r.proposal_id = proposal.proposal_id;
    r.diagnostic = "empty change pool";
    return r;
  }
  EmbeddingVector<float> query;
  try {
    query = gateway.embed_text(proposal.text);
  } catch (const PoisonedRequest& e) {
    VerificationResult r;
    r.proposal_id = proposal.proposal_id;
    r.diagnostic = e.what();
    return r;
  }
  const auto neighbors = pool.index().knn(query, options.k);
  std::vector<std::string> shortlist;
  shortlist.reserve(neighbors.size());
  for (const auto& nb : neighbors) shortlist.push_back(nb.item_id);
  return hybrid_verify(proposal.proposal_id, shortlist, options, [&](std::size_t rank) {
    return gateway.verify_membership_verdict(pool.at(neighbors[rank].row), proposal.text);
  });
}

std::vector<VerificationResult> verify_all(const std::vector<TrendProposal>& proposals,
                                           const ChangePool& pool, AnalystGateway& gateway,
                                           const VerifyOptions& options, std::size_t workers) {
  std::vector<VerificationResult> out(proposals.size());
  parallel_for(proposals.size(), workers,
               [&](std::size_t i) { out[i] = verify_trend(proposals[i], pool, gateway, options); });
  return out;
}

TimeWindow parse_time_window(std::string_view text) {
  const auto sep = text.find("..");
  if (sep == std::string_view::npos) throw Error("time window must look like START..END");
  auto side = [](std::string_view s, bool is_end) {
    const std::string t = trim(s);
    if (t.size() == 10) {
      const Timestamp day = parse_rfc3339(t + "T00:00:00Z");
      return is_end ? day + std::chrono::days{1} - std::chrono::seconds{1} : day;
    }
    return parse_rfc3339(t);
  };
  TimeWindow w{side(text.substr(0, sep), false), side(text.substr(sep + 2), true)};
  if (!(w.start < w.end)) throw Error("time window start must precede its end");
  return w;
}

std::vector<ChangeRecord> filter_time(const std::vector<ChangeRecord>& changes,
                                      const TimeWindow& window) {
  if (!(window.start < window.end)) throw Error("time window start must precede its end");
  std::vector<ChangeRecord> out;
  for (const auto& c : changes)
    if (c.before_time >= window.start && c.after_time <= window.end) out.push_back(c);
  return out;
}

SubjectFilterResult filter_subject(const std::vector<ChangeRecord>& changes,
                                   const std::string& subject, std::size_t pool_size,
                                   AnalystGateway& gateway, std::size_t workers) {
  if (trim(subject).empty()) throw Error("subject sentence is empty");
  if (pool_size > changes.size())
    throw Error("subject pool size " + std::to_string(pool_size) + " exceeds the " +
                std::to_string(changes.size()) + " available changes");
  SubjectFilterResult result;
  if (pool_size == 0 || changes.empty()) return result;
  const std::size_t width = width_for(workers, gateway);
  const ChangePool pool = ChangePool::build(changes, gateway, width, &result.diagnostics);
  if (pool.size() == 0) return result;
  const auto query = gateway.embed_text(subject);
  const auto neighbors = pool.index().knn(query, pool_size);
  std::vector<Verdict> verdicts(neighbors.size(), Verdict::failed);
  parallel_for(neighbors.size(), width, [&](std::size_t i) {
    verdicts[i] = gateway.verify_membership_verdict(pool.at(neighbors[i].row), subject);
  });
  result.queried = neighbors.size();
  std::set<std::string> keep;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (verdicts[i] == Verdict::yes) keep.insert(neighbors[i].item_id);
    if (verdicts[i] == Verdict::failed)
      result.diagnostics.push_back("membership query failed for change " + neighbors[i].item_id);
  }
  for (const auto& c : changes)
    if (keep.count(c.id)) result.kept.push_back(c);
  return result;
}

RankMode rank_mode_from_string(std::string_view s) {
  if (s == "most_detailed") return RankMode::most_detailed;
  if (s == "period_delta") return RankMode::period_delta;
  if (s == "stratified_by_word_count" || s == "stratified") return RankMode::stratified_by_word_count;
  throw Error("unknown ranking mode: " + std::string(s));
}

std::string_view to_string(RankMode m) {
  switch (m) {
    case RankMode::most_detailed: return "most_detailed";
    case RankMode::period_delta: return "period_delta";
    case RankMode::stratified_by_word_count: return "stratified_by_word_count";
  }
  return "?";
}

PeriodCounts period_counts(const std::vector<TrendProposal>& proposals,
                           const std::vector<ChangeRecord>& changes, const TimeWindow& pre,
                           const TimeWindow& post) {
  std::unordered_map<std::string, const ChangeRecord*> by_id;
  for (const auto& c : changes) by_id.emplace(c.id, &c);
  auto inside = [](const ChangeRecord& c, const TimeWindow& w) {
    return c.before_time >= w.start && c.after_time <= w.end;
  };
  PeriodCounts out;
  for (const auto& p : proposals) {
    auto& [before, after] = out[p.proposal_id];
    for (const auto& id : p.source_change_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) continue;
      before += inside(*it->second, pre);
      after += inside(*it->second, post);
    }
  }
  return out;
}

std::size_t word_bucket(std::size_t word_count, std::size_t width) {
  if (width == 0) throw Error("bucket width must be positive");
  return word_count == 0 ? 0 : (word_count - 1) / width;
}

std::vector<TrendProposal> rank_proposals(std::vector<TrendProposal> proposals, RankMode mode,
                                          const PeriodCounts* counts, std::size_t bucket_width) {
  auto by_detail = [](const TrendProposal& a, const TrendProposal& b) {
    if (a.word_count != b.word_count) return a.word_count > b.word_count;
    return a.proposal_id < b.proposal_id;
  };
  switch (mode) {
    case RankMode::most_detailed:
      std::sort(proposals.begin(), proposals.end(), by_detail);
      return proposals;
    case RankMode::period_delta: {
      if (!counts) throw Error("period_delta ranking needs pre/post windows");
      auto delta = [&](const TrendProposal& p) {
        auto it = counts->find(p.proposal_id);
        if (it == counts->end()) return 0LL;
        return static_cast<long long>(it->second.second) - static_cast<long long>(it->second.first);
      };
      std::sort(proposals.begin(), proposals.end(), [&](const auto& a, const auto& b) {
        const auto da = delta(a), db = delta(b);
        if (da != db) return da > db;
        return a.proposal_id < b.proposal_id;
      });
      return proposals;
    }
    case RankMode::stratified_by_word_count: {
      std::map<std::size_t, std::vector<TrendProposal>, std::greater<>> buckets;
      for (auto& p : proposals) buckets[word_bucket(p.word_count, bucket_width)].push_back(std::move(p));
      for (auto& [b, list] : buckets) std::sort(list.begin(), list.end(), by_detail);
      std::vector<TrendProposal> out;
      for (std::size_t round = 0;; ++round) {
        bool any = false;
        for (auto& [b, list] : buckets) {
          if (round < list.size()) {
            out.push_back(std::move(list[round]));
            any = true;
          }
        }
        if (!any) break;
      }
      return out;
    }
  }
  throw Error("unknown ranking mode");
}

UnusualResult unusual_query(const std::vector<ImageSequence>& sequences, AnalystGateway& gateway,
                            std::size_t workers) {
  struct Job {
    const ImageSequence* seq;
    const SequenceImage* image;
  };
  std::vector<Job> jobs;
  for (const auto& s : sequences)
    for (const auto& im : s.images) jobs.push_back({&s, &im});
  std::vector<std::optional<std::vector<std::string>>> answers(jobs.size());
  parallel_for(jobs.size(), width_for(workers, gateway), [&](std::size_t i) {
    answers[i] = gateway.unusual_things(jobs[i].image->image_uri, jobs[i].image->timestamp);
  });

  UnusualResult result;
  result.images = jobs.size();
  std::vector<ChangeRecord> records;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!answers[i]) {
      ++result.poisoned;
      continue;
    }
    const auto& seq = *jobs[i].seq;
    const auto& im = *jobs[i].image;
    for (const auto& finding : *answers[i]) {
      ChangeRecord r;
      r.id = change_id(seq.location_id, 0, "", finding);
      r.location_id = seq.location_id;
      r.after_desc = finding;
      r.after_index = 0;
      r.before_time = r.after_time = im.timestamp;
      r.lat = seq.lat;
      r.lon = seq.lon;
      r.after_uri = im.image_uri;
      records.push_back(std::move(r));
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const ChangeRecord& a, const ChangeRecord& b) { return a.id < b.id; });
  records.erase(std::unique(records.begin(), records.end(),
                            [](const auto& a, const auto& b) { return a.id == b.id; }),
                records.end());
  result.records = std::move(records);
  return result;
}

void save_trend_store(const std::filesystem::path& path, const std::vector<TrendRecord>& trends) {
  std::vector<Json> rows;
  for (const auto& t : trends) {
    if (t.proposal.proposal_id != t.verification.proposal_id)
      throw Error("trend record pairs mismatched proposal and verification");
    Json j = to_json(t.verification);
    j["text"] = t.proposal.text;
    j["member_count"] = t.proposal.member_count;
    j["word_count"] = t.proposal.word_count;
    j["source_change_ids"] = t.proposal.source_change_ids;
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

std::vector<TrendRecord> load_trend_store(const std::filesystem::path& path) {
  std::vector<TrendRecord> out;
  for (const auto& j : read_jsonl(path))
    out.push_back(TrendRecord{proposal_from_json(j), verification_from_json(j)});
  return out;
}

void save_proposals(const std::filesystem::path& path, const std::vector<TrendProposal>& proposals) {
  std::vector<Json> rows;
  for (const auto& p : proposals) rows.push_back(to_json(p));
  write_jsonl(path, rows);
}

std::vector<TrendProposal> load_proposals(const std::filesystem::path& path) {
  std::vector<TrendProposal> out;
  for (const auto& j : read_jsonl(path)) out.push_back(proposal_from_json(j));
  return out;
}

}  // namespace trendscope
