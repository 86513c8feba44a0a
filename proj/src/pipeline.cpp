#include "trendscope/pipeline.hpp"

#include <algorithm>
#include <random>

#include "trendscope/change_detection.hpp"
#include "trendscope/evaluation.hpp"
#include "trendscope/export.hpp"
#include "trendscope/gateway.hpp"
#include "trendscope/trends.hpp"

namespace trendscope {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (!(radius_m > 0.0)) throw Error("radius_m must be positive");
  if (!(suppression_radius() > 0.0)) throw Error("suppression radius must be positive");
  if (min_images < 2) throw Error("min_images must be at least 2");
  if (!(tight > 0.0) || tight > loose) throw Error("need 0 < tight <= loose");
  if (n < 1) throw Error("N must be at least 1");
  if (k_multiple < 1) throw Error("k_multiple must be at least 1");
  if (k_effective() < n) throw Error("k must be at least N");
  const RankMode mode = rank_mode_from_string(ranking);
  if (mode == RankMode::period_delta && (!pre_window || !post_window))
    throw Error("period_delta ranking needs both --pre-window and --post-window");
  if (pre_window) parse_time_window(*pre_window);
  if (post_window) parse_time_window(*post_window);
  if (time_window) parse_time_window(*time_window);
  if (subject && trim(*subject).empty()) throw Error("subject sentence is empty");
  if (pool_size && !subject) throw Error("--pool-size only applies with --subject");
  if (max_in_flight && *max_in_flight == 0) throw Error("max_in_flight must be at least 1");
  if (verify_top && *verify_top == 0) throw Error("verify_top must be at least 1");
}

Json RunConfig::to_json() const {
  Json j{{"radius_m", radius_m},
         {"suppression_radius_m", suppression_radius()},
         {"min_images", min_images},
         {"critic_enabled", critic_enabled},
         {"tight", tight},
         {"loose", loose},
         {"n", n},
         {"k", k_effective()},
         {"ranking", ranking},
         {"unusual", unusual},
         {"seed", seed}};
  if (seed_sample) j["seed_sample"] = *seed_sample;
  if (verify_top) j["verify_top"] = *verify_top;
  if (pre_window) j["pre_window"] = *pre_window;
  if (post_window) j["post_window"] = *post_window;
  if (time_window) j["time_window"] = *time_window;
  if (subject) j["subject"] = *subject;
  if (pool_size) j["pool_size"] = *pool_size;
  return j;
}

namespace artifacts {
fs::path locations(const RunConfig& c) { return c.out_dir / "ingest" / "locations.jsonl"; }
fs::path sequences(const RunConfig& c) { return c.out_dir / "ingest" / "sequences.jsonl"; }
fs::path rejections(const RunConfig& c) { return c.out_dir / "ingest" / "rejections.jsonl"; }
fs::path detect_dir(const RunConfig& c) { return c.out_dir / "detect"; }
fs::path changes(const RunConfig& c) { return detect_dir(c) / kChangeStoreFile; }
fs::path abstractions(const RunConfig& c) { return c.out_dir / "propose" / "abstractions.jsonl"; }
fs::path proposals(const RunConfig& c) { return c.out_dir / "propose" / "proposals.jsonl"; }
fs::path trends(const RunConfig& c) { return c.out_dir / "verify" / "trends.jsonl"; }
fs::path pool_vectors(const RunConfig& c) { return c.out_dir / "verify" / "pool.vec"; }
fs::path pool_ids(const RunConfig& c) { return c.out_dir / "verify" / "pool.ids"; }
fs::path query_changes(const RunConfig& c) { return c.out_dir / "query" / "changes.jsonl"; }
fs::path query_proposals(const RunConfig& c) { return c.out_dir / "query" / "proposals.jsonl"; }
fs::path query_trends(const RunConfig& c) { return c.out_dir / "query" / "trends.jsonl"; }
fs::path eval_report(const RunConfig& c) { return c.out_dir / "eval" / "report.json"; }
fs::path eval_text(const RunConfig& c) { return c.out_dir / "eval" / "report.txt"; }
fs::path geojson(const RunConfig& c) { return c.out_dir / "export" / "trends.geojson"; }
fs::path report_html(const RunConfig& c) { return c.out_dir / "export" / "report.html"; }
fs::path poison(const RunConfig& c) { return c.out_dir / "poison.jsonl"; }
}  // namespace artifacts

namespace {

const fs::path& require(const fs::path& p) {
  if (p.empty() || !fs::exists(p)) throw MissingArtifact(p);
  return p;
}

/// Content digest over a command's inputs and parameters. Paths are left
/// out so that identical runs in different directories agree.
class Stamp {
 public:
  Stamp(std::string_view command, const Json& params) : command_(command) {
    mix(command);
    mix(params.dump());
  }

  void file(const fs::path& path) { mix(read_file(require(path))); }
  void text(std::string_view s) { mix(s); }

  std::string digest() const { return hex64(h_); }

  fs::path path(const RunConfig& c) const { return c.out_dir / "stamps" / (command_ + ".json"); }

  bool current(const RunConfig& c, const std::vector<fs::path>& outputs) const {
    const auto p = path(c);
    if (!fs::exists(p)) return false;
    for (const auto& o : outputs)
      if (!fs::exists(o)) return false;
    try {
      return Json::parse(read_file(p)).value("digest", "") == digest();
    } catch (const Json::exception&) {
      return false;
    }
  }

  void commit(const RunConfig& c) const {
    write_file_atomic(path(c), Json{{"command", command_}, {"digest", digest()}}.dump() + "\n");
  }

 private:
  void mix(std::string_view s) {
    h_ = fnv1a64(s, h_);
    h_ = mix64(h_ ^ s.size());
  }

  std::string command_;
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

void stamp_backend(Stamp& stamp, const RunConfig& c) {
  stamp.file(c.backend_config);
  const auto backend = load_backend_config(c.backend_config);
  if (backend.kind == "synthetic") stamp.file(backend.world);
  stamp.text(c.max_in_flight ? std::to_string(*c.max_in_flight) : "-");
  if (!c.prompt_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(c.prompt_dir)) stamp.file(entry.path());
  }
}

struct Runtime {
  std::unique_ptr<AnalystGateway> gateway;
  std::size_t poison_before = 0;
};

Runtime make_runtime(const RunConfig& c) {
  const auto backend = load_backend_config(require(c.backend_config));
  GatewayOptions options;
  options.max_in_flight = c.max_in_flight.value_or(backend.max_in_flight);
  options.retry = backend.retry;
  options.poison_path = artifacts::poison(c);
  fs::create_directories(c.out_dir);
  auto prompts = c.prompt_dir.empty() ? PromptLibrary::load_default() : PromptLibrary::load(c.prompt_dir);
  Runtime rt;
  rt.gateway = std::make_unique<AnalystGateway>(make_backend(backend), std::move(prompts), options);
  return rt;
}

void finish(CommandOutcome& out, const Runtime& rt, const RunConfig& c) {
  out.poison_growth = rt.gateway->poison().size() - rt.poison_before;
  out.summary["poisoned_requests"] = out.poison_growth;
  if (out.poison_growth > 0) {
    out.messages.push_back(std::to_string(out.poison_growth) + " requests poisoned; see " +
                           artifacts::poison(c).string());
    if (c.fail_on_poison && out.exit_code == 0) out.exit_code = kExitPoison;
  }
}

CommandOutcome up_to_date(std::string_view command) {
  CommandOutcome out;
  out.up_to_date = true;
  out.messages.push_back(std::string(command) + ": inputs unchanged, nothing to do");
  return out;
}

std::vector<ImageSequence> load_sequences(const fs::path& path) {
  std::vector<ImageSequence> out;
  for (const auto& j : read_jsonl(require(path))) out.push_back(sequence_from_json(j));
  return out;
}

void write_summary(const fs::path& dir, const Json& summary) {
  write_file_atomic(dir / "summary.json", summary.dump(1) + "\n");
}

std::vector<TrendProposal> rank_for(const RunConfig& c, std::vector<TrendProposal> proposals,
                                    const std::vector<ChangeRecord>& changes) {
  const RankMode mode = rank_mode_from_string(c.ranking);
  PeriodCounts counts;
  if (mode == RankMode::period_delta)
    counts = period_counts(proposals, changes, parse_time_window(*c.pre_window),
                           parse_time_window(*c.post_window));
  auto ranked = rank_proposals(std::move(proposals), mode, &counts);
  if (c.verify_top && ranked.size() > *c.verify_top) ranked.resize(*c.verify_top);
  return ranked;
}

std::size_t verify_workers(std::size_t proposals) {
  return std::max<std::size_t>(1, std::min<std::size_t>(proposals, 4));
}

/// Propose, rank and verify over a change set. Shared by verify and query.
std::vector<TrendRecord> verify_proposals(const RunConfig& c, const std::vector<TrendProposal>& ranked,
                                          const std::vector<ChangeRecord>& changes,
                                          AnalystGateway& gateway, Json& summary,
                                          const fs::path* save_pool_to = nullptr) {
  std::vector<std::string> diagnostics;
  const ChangePool pool = ChangePool::build(changes, gateway, 0, &diagnostics);
  if (save_pool_to && pool.size() > 0)
    pool.index().save(save_pool_to[0], save_pool_to[1]);
  const VerifyOptions options{c.k_effective(), c.n, false, gateway.max_in_flight()};
  const auto results = verify_all(ranked, pool, gateway, options, verify_workers(ranked.size()));
  std::vector<TrendRecord> trends;
  std::size_t positive = 0, queries = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    positive += results[i].positive;
    queries += results[i].oracle_queries_used;
    trends.push_back(TrendRecord{ranked[i], results[i]});
  }
  summary["pool_size"] = pool.size();
  summary["pool_embedding_failures"] = diagnostics.size();
  summary["verified_proposals"] = ranked.size();
  summary["positive_trends"] = positive;
  summary["oracle_queries"] = queries;
  summary["n"] = c.n;
  summary["k"] = c.k_effective();
  return trends;
}

void save_abstractions(const fs::path& path, const std::vector<AbstractionItem>& items) {
  std::vector<Json> rows;
  for (const auto& it : items)
    rows.push_back(Json{{"change_id", it.change_id}, {"level", it.level}, {"text", it.text}});
  write_jsonl(path, rows);
}

}  // namespace

CommandOutcome cmd_ingest(const RunConfig& c) {
  c.validate();
  Stamp stamp("ingest", Json{{"radius_m", c.radius_m},
                             {"suppression_radius_m", c.suppression_radius()},
                             {"seed_sample", c.seed_sample ? Json(*c.seed_sample) : Json()},
                             {"min_images", c.min_images},
                             {"seed", c.seed}});
  stamp.file(c.manifest);
  const std::vector<fs::path> outputs{artifacts::locations(c), artifacts::sequences(c),
                                      artifacts::rejections(c)};
  if (stamp.current(c, outputs)) return up_to_date("ingest");

  CommandOutcome out;
  const auto load = ingest_manifest(c.manifest);
  const auto counts = count_neighbors(load.points, c.radius_m);
  NmsOptions nms;
  nms.suppression_radius_m = c.suppression_radius();
  nms.candidate_sample = c.seed_sample;
  nms.seed = c.seed;
  const auto locations = select_locations_nms(load.points, counts, nms);

  std::vector<std::variant<ImageSequence, SequenceRejection>> assembled(locations.size());
  parallel_for(locations.size(), std::thread::hardware_concurrency(), [&](std::size_t i) {
    assembled[i] = assemble_sequence(locations[i], load.points, c.radius_m, c.min_images);
  });
  std::vector<Json> loc_rows, seq_rows, rej_rows;
  for (const auto& l : locations) loc_rows.push_back(to_json(l));
  for (const auto& a : assembled) {
    if (const auto* s = std::get_if<ImageSequence>(&a)) {
      seq_rows.push_back(to_json(*s));
    } else {
      const auto& r = std::get<SequenceRejection>(a);
      rej_rows.push_back(Json{{"location_id", r.location_id},
                              {"image_count", r.image_count},
                              {"min_images", r.min_images}});
    }
  }
  write_jsonl(artifacts::locations(c), loc_rows);
  write_jsonl(artifacts::sequences(c), seq_rows);
  write_jsonl(artifacts::rejections(c), rej_rows);
  out.summary = Json{{"points", load.points.size()},
                     {"rejected_lines", load.rejected},
                     {"locations", locations.size()},
                     {"sequences", seq_rows.size()},
                     {"rejected_sequences", rej_rows.size()}};
  for (const auto& d : load.diagnostics) out.messages.push_back("manifest " + d);
  write_summary(c.out_dir / "ingest", out.summary);
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_detect(const RunConfig& c) {
  c.validate();
  Stamp stamp("detect", Json{{"critic_enabled", c.critic_enabled}});
  stamp.file(artifacts::sequences(c));
  stamp_backend(stamp, c);
  if (stamp.current(c, {artifacts::changes(c)})) return up_to_date("detect");

  // A checkpoint left by a run over different inputs must not be resumed.
  const fs::path dir = artifacts::detect_dir(c);
  const fs::path run_marker = dir / "run.json";
  fs::create_directories(dir);
  bool same_run = false;
  if (fs::exists(run_marker)) {
    try {
      same_run = Json::parse(read_file(run_marker)).value("digest", "") == stamp.digest();
    } catch (const Json::exception&) {
    }
  }
  if (!same_run) {
    fs::remove(dir / kChangePartFile);
    fs::remove(dir / kStage1CheckpointFile);
    fs::remove(artifacts::changes(c));
    write_file_atomic(run_marker, Json{{"digest", stamp.digest()}}.dump() + "\n");
  }

  CommandOutcome out;
  Runtime rt = make_runtime(c);
  const auto sequences = load_sequences(artifacts::sequences(c));
  Stage1Options options;
  options.critic_enabled = c.critic_enabled;
  options.store_dir = dir;
  const auto result = run_stage1(sequences, *rt.gateway, options);
  out.summary = Json{{"sequences", sequences.size()},
                     {"processed", result.processed},
                     {"resumed", result.resumed},
                     {"poisoned_sequences", result.poisoned},
                     {"detected", result.detected},
                     {"critic_enabled", c.critic_enabled},
                     {"critic_rejected", result.critic_rejected},
                     {"records", result.records.size()},
                     {"parse_diagnostics", result.diagnostics.size()}};
  std::string diag;
  for (const auto& d : result.diagnostics) diag += d + "\n";
  write_file_atomic(dir / "diagnostics.txt", diag);
  finish(out, rt, c);
  write_summary(dir, out.summary);
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_propose(const RunConfig& c) {
  c.validate();
  Stamp stamp("propose", Json{{"tight", c.tight}, {"loose", c.loose}, {"k", c.k_effective()}, {"seed", c.seed}});
  stamp.file(artifacts::changes(c));
  stamp_backend(stamp, c);
  if (stamp.current(c, {artifacts::proposals(c), artifacts::abstractions(c)})) return up_to_date("propose");

  CommandOutcome out;
  Runtime rt = make_runtime(c);
  const auto changes = load_change_store(artifacts::changes(c));
  if (changes.empty()) out.messages.push_back("change store is empty; no proposals");
  ProposeOptions options;
  options.tight = c.tight;
  options.loose = c.loose;
  options.min_members = c.k_effective();
  options.order_seed = c.seed;
  const auto result = propose_trends(changes, *rt.gateway, options);
  save_abstractions(artifacts::abstractions(c), result.items);
  save_proposals(artifacts::proposals(c), result.proposals);
  out.summary = Json{{"changes", changes.size()},
                     {"abstraction_items", result.items.size()},
                     {"clusters", result.clusters},
                     {"proposals", result.proposals.size()},
                     {"min_members", options.min_members},
                     {"diagnostics", result.diagnostics.size()}};
  finish(out, rt, c);
  write_summary(c.out_dir / "propose", out.summary);
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_verify(const RunConfig& c) {
  c.validate();
  Stamp stamp("verify", c.to_json());
  stamp.file(artifacts::proposals(c));
  stamp.file(artifacts::changes(c));
  stamp_backend(stamp, c);
  if (stamp.current(c, {artifacts::trends(c)})) return up_to_date("verify");

  CommandOutcome out;
  Runtime rt = make_runtime(c);
  const auto changes = load_change_store(artifacts::changes(c));
  const auto ranked = rank_for(c, load_proposals(artifacts::proposals(c)), changes);
  const fs::path pool_files[2] = {artifacts::pool_vectors(c), artifacts::pool_ids(c)};
  fs::create_directories(artifacts::trends(c).parent_path());
  const auto trends = verify_proposals(c, ranked, changes, *rt.gateway, out.summary, pool_files);
  save_trend_store(artifacts::trends(c), trends);
  finish(out, rt, c);
  write_summary(c.out_dir / "verify", out.summary);
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_query(const RunConfig& c) {
  c.validate();
  Stamp stamp("query", c.to_json());
  if (c.unusual) stamp.file(artifacts::sequences(c));
  else stamp.file(artifacts::changes(c));
  stamp_backend(stamp, c);
  const std::vector<fs::path> outputs{artifacts::query_changes(c), artifacts::query_proposals(c),
                                      artifacts::query_trends(c)};
  if (stamp.current(c, outputs)) return up_to_date("query");

  CommandOutcome out;
  Runtime rt = make_runtime(c);
  std::vector<ChangeRecord> pool;
  if (c.unusual) {
    const auto unusual = unusual_query(load_sequences(artifacts::sequences(c)), *rt.gateway);
    pool = unusual.records;
    out.summary["images_queried"] = unusual.images;
  } else {
    pool = load_change_store(artifacts::changes(c));
  }
  out.summary["base_changes"] = pool.size();
  // Time before subject: the subject pool truncation depends on what it sees.
  if (c.time_window) {
    pool = filter_time(pool, parse_time_window(*c.time_window));
    out.summary["after_time_filter"] = pool.size();
  }
  if (c.subject) {
    std::size_t pool_size = c.pool_size.value_or(pool.size());
    if (pool_size > pool.size()) {
      out.messages.push_back("pool size " + std::to_string(pool_size) + " exceeds the " +
                             std::to_string(pool.size()) + " available changes; using all");
      pool_size = pool.size();
    }
    auto filtered = filter_subject(pool, *c.subject, pool_size, *rt.gateway);
    pool = std::move(filtered.kept);
    out.summary["subject_queries"] = filtered.queried;
    out.summary["after_subject_filter"] = pool.size();
  }
  fs::create_directories(artifacts::query_changes(c).parent_path());
  save_change_store(artifacts::query_changes(c), pool);

  ProposeOptions options;
  options.tight = c.tight;
  options.loose = c.loose;
  options.min_members = c.k_effective();
  options.order_seed = c.seed;
  const auto proposed = propose_trends(pool, *rt.gateway, options);
  save_proposals(artifacts::query_proposals(c), proposed.proposals);
  out.summary["proposals"] = proposed.proposals.size();
  const auto ranked = rank_for(c, proposed.proposals, pool);
  const auto trends = verify_proposals(c, ranked, pool, *rt.gateway, out.summary);
  save_trend_store(artifacts::query_trends(c), trends);
  finish(out, rt, c);
  write_summary(c.out_dir / "query", out.summary);
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_eval(const RunConfig& c) {
  c.validate();
  Stamp stamp("eval", c.to_json());
  stamp.file(artifacts::sequences(c));
  stamp.file(artifacts::changes(c));
  if (fs::exists(artifacts::trends(c))) stamp.file(artifacts::trends(c));
  if (!c.pair_labels.empty()) stamp.file(c.pair_labels);
  stamp_backend(stamp, c);
  if (stamp.current(c, {artifacts::eval_report(c), artifacts::eval_text(c)})) return up_to_date("eval");

  CommandOutcome out;
  const auto backend = load_backend_config(c.backend_config);
  std::optional<SyntheticWorld> world;
  if (backend.kind == "synthetic") world = SyntheticWorld::load(backend.world);
  const auto sequences = load_sequences(artifacts::sequences(c));
  const auto changes = load_change_store(artifacts::changes(c));
  Json report = Json::object();
  std::string text;
  char line[256];

  // Change detection over labeled image pairs.
  std::vector<LabeledPair> labels;
  if (!c.pair_labels.empty()) {
    for (const auto& j : read_jsonl(c.pair_labels)) labels.push_back(labeled_pair_from_json(j));
  } else if (world) {
    labels = pair_labels_from_world(sequences, *world);
  }
  const bool any_positive =
      std::any_of(labels.begin(), labels.end(), [](const LabeledPair& l) { return l.has_change; });
  if (any_positive) {
    const double ap = eval_change_detection(analyst_detector(changes), sequences, labels);
    report["change_detection"] = Json{{"analyst_ap", ap}, {"pairs", labels.size()}};
    std::snprintf(line, sizeof line, "change detection AP (analyst): %.4f over %zu pairs\n", ap, labels.size());
    text += line;
  } else {
    text += "change detection: no labeled changes available\n";
  }
  if (world) {
    const auto st = critic_stats(changes, *world);
    report["change_precision"] = Json{{"records", st.records},
                                      {"true_records", st.true_records},
                                      {"precision", st.precision},
                                      {"recall", st.recall},
                                      {"critic_enabled", c.critic_enabled}};
    std::snprintf(line, sizeof line, "change records: precision %.4f, recall %.4f (critic %s)\n",
                  st.precision, st.recall, c.critic_enabled ? "on" : "off");
    text += line;
  }

  // Membership ranking over each proposal's nearest changes, labeled by the
  // scripted oracle.
  if (world && fs::exists(artifacts::trends(c)) && !changes.empty()) {
    const auto trends = load_trend_store(artifacts::trends(c));
    Runtime rt = make_runtime(c);
    const ChangePool pool = ChangePool::build(changes, *rt.gateway);
    std::vector<double> emb_scores, rand_scores;
    std::vector<bool> flags;
    std::mt19937_64 rng(mix64(c.seed ^ 0x7461626c65));
    std::size_t used = 0;
    for (const auto& t : trends) {
      if (used++ >= 50) break;
      const auto q = rt.gateway->embed_text(t.proposal.text);
      for (const auto& nb : pool.index().knn(q, 40)) {
        emb_scores.push_back(1.0 - nb.distance);
        rand_scores.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
        flags.push_back(world->belongs(change_text(pool.at(nb.row)), t.proposal.text));
      }
    }
    if (std::find(flags.begin(), flags.end(), true) != flags.end()) {
      const double emb = average_precision(emb_scores, flags);
      const double rnd = average_precision(rand_scores, flags);
      const auto spread = subset_ap_stddev(emb_scores, flags, 1000, 0.75, c.seed);
      report["membership"] = Json{{"pairs", flags.size()},
                                  {"embedding_ap", emb},
                                  {"random_ap", rnd},
                                  {"embedding_ap_subset_stddev", spread.stddev}};
      std::snprintf(line, sizeof line,
                    "membership AP over %zu pairs: embedding %.4f, random %.4f (subset sd %.4f)\n",
                    flags.size(), emb, rnd, spread.stddev);
      text += line;
    }
    finish(out, rt, c);
  }

  // Hybrid verification against its comparators on scripted verification
  // worlds, plus the k ablation.
  const std::vector<std::size_t> n_values{50, 100, 200};
  const auto informative = make_verification_world(
      WorldSpec{WorldKind::informative, 3000, 20, 100, c.seed});
  const auto rows = eval_hybrid_accuracy(informative, n_values, c.k_multiple, c.seed);
  Json acc = Json::array();
  for (const auto& r : rows)
    acc.push_back(Json{{"n", r.n}, {"k", r.k}, {"all_true", r.all_true}, {"threshold", r.threshold},
                       {"rand_mllm", r.rand_mllm}, {"hybrid", r.hybrid}});
  report["hybrid_accuracy"] = acc;
  text += "\nhybrid accuracy (informative world, k = " + std::to_string(c.k_multiple) + "N)\n";
  text += render_accuracy_table(rows);

  const auto noisy = make_verification_world(WorldSpec{WorldKind::noisy, 3000, 20, 100, c.seed});
  const auto ablation = ablate_k(noisy, n_values, {2, 3, 4, 5});
  Json abl = Json::object();
  text += "\nk ablation (noisy world), accuracy at N = 50 / 100 / 200\n";
  for (const auto& [m, accs] : ablation) {
    abl[std::to_string(m) + "N"] = accs;
    std::snprintf(line, sizeof line, "  k=%zuN: %.3f %.3f %.3f\n", m, accs[0], accs[1], accs[2]);
    text += line;
  }
  report["k_ablation"] = abl;

  const auto budget = budget_dry_run(std::max<std::size_t>(changes.size(), 1), c.k_effective(), c.n);
  const auto reference_scale = budget_dry_run(3'000'000, 1500, 500);
  report["budget"] = Json{{"pool", budget.pool_size},
                          {"k", budget.k},
                          {"max_queries", budget.max_hybrid_queries},
                          {"reduction", budget.reduction_factor},
                          {"reference_pool", reference_scale.pool_size},
                          {"reference_reduction", reference_scale.reduction_factor}};
  std::snprintf(line, sizeof line, "\nquery budget: at most %zu per proposal over %zu changes (%.1fx)\n",
                budget.max_hybrid_queries, budget.pool_size, budget.reduction_factor);
  text += line;
  std::snprintf(line, sizeof line, "reference scale: %zu changes, k = %zu -> %.0fx fewer queries\n",
                reference_scale.pool_size, reference_scale.k, reference_scale.reduction_factor);
  text += line;

  fs::create_directories(artifacts::eval_report(c).parent_path());
  write_file_atomic(artifacts::eval_report(c), report.dump(1) + "\n");
  write_file_atomic(artifacts::eval_text(c), text);
  out.summary = report;
  stamp.commit(c);
  return out;
}

CommandOutcome cmd_export(const RunConfig& c, ExportSource source) {
  const bool q = source == ExportSource::query;
  const fs::path trends_path = q ? artifacts::query_trends(c) : artifacts::trends(c);
  const fs::path changes_path = q ? artifacts::query_changes(c) : artifacts::changes(c);
  const fs::path geo = q ? c.out_dir / "export" / "query.geojson" : artifacts::geojson(c);
  const fs::path html = q ? c.out_dir / "export" / "query.html" : artifacts::report_html(c);
  Stamp stamp(q ? "export-query" : "export", Json::object());
  stamp.file(trends_path);
  stamp.file(changes_path);
  if (stamp.current(c, {geo, html})) return up_to_date("export");

  CommandOutcome out;
  const auto trends = load_trend_store(trends_path);
  const auto changes = load_change_store(changes_path);
  std::size_t positive = 0;
  for (const auto& t : trends) positive += t.verification.positive;
  const Json collection = trends_geojson(trends, changes);
  out.summary = Json{{"trends", trends.size()},
                     {"verified", positive},
                     {"features", collection["features"].size()}};
  write_file_atomic(geo, collection.dump(1) + "\n");
  write_file_atomic(html, render_report_html(trends, changes, out.summary));
  stamp.commit(c);
  return out;
}

void write_synthetic_city(const SyntheticCity& city, const fs::path& dir, std::size_t max_in_flight) {
  fs::create_directories(dir);
  std::vector<Json> rows;
  rows.reserve(city.points.size());
  for (const auto& p : city.points) rows.push_back(to_json(p));
  write_jsonl(dir / "manifest.jsonl", rows);
  city.world.save(dir / "world.json");
  const Json backend{{"kind", "synthetic"},
                     {"world", "world.json"},
                     {"max_in_flight", max_in_flight},
                     {"retry", Json{{"max_attempts", 3}, {"initial_backoff_ms", 10}, {"multiplier", 2.0}}}};
  write_file_atomic(dir / "backend.json", backend.dump(1) + "\n");
  write_file_atomic(dir / "truth.json", city.truth_json().dump(1) + "\n");
}

}  // namespace trendscope
