#include <fstream>
#include <random>

#include "support.hpp"
#include "trendscope/change_detection.hpp"

using namespace trendscope;

namespace {

ImageSequence sequence(const std::string& loc, int n, int first_year = 2010) {
  ImageSequence s;
  s.location_id = loc;
  s.lat = 37.0;
  s.lon = -122.0;
  for (int i = 0; i < n; ++i)
    s.images.push_back(SequenceImage{loc + "-" + std::to_string(i), "synth://" + loc + "/" + std::to_string(i),
                                     testing::day(first_year + i, 6, 1), 0.0});
  return s;
}

// Five real changes over three locations; `hallucinations` extra reports that
// the critic rejects.
SyntheticWorld five_change_world(int hallucinations) {
  SyntheticWorld w;
  auto real = [&](std::string uri, std::string b, std::string a) {
    w.changes.push_back(PlantedChange{std::move(uri), std::move(b), std::move(a), true, true, true});
  };
  real("synth://A/2", "no awning", "red awning");
  real("synth://A/5", "bare wall", "mural");
  real("synth://B/1", "open lot", "fenced lot");
  real("synth://B/7", "plain sidewalk", "bike racks");
  real("synth://C/3", "grey door", "green door");
  const std::vector<std::string> spots{"synth://A/6", "synth://C/8"};
  for (int i = 0; i < hallucinations; ++i)
    w.changes.push_back(PlantedChange{spots[i % 2], "quiet corner " + std::to_string(i),
                                      "a phantom kiosk " + std::to_string(i), false, true, false});
  return w;
}

std::vector<ImageSequence> three_locations() { return {sequence("A", 10), sequence("B", 10), sequence("C", 10)}; }

std::set<std::string> ids(const std::vector<ChangeRecord>& rs) {
  std::set<std::string> out;
  for (const auto& r : rs) out.insert(r.id);
  return out;
}

}  // namespace

TEST_CASE("stage 1 on five planted changes") {
  const auto seqs = three_locations();
  SUBCASE("no hallucinations, critic on") {
    auto a = testing::scripted(five_change_world(0));
    Stage1Options o;
    o.store_dir = testing::scratch_dir("s1");
    const auto r = run_stage1(seqs, *a.gateway, o);
    CHECK(r.records.size() == 5);
    CHECK(r.complete);
    CHECK(r.processed == 3);
    for (const auto& c : r.records) CHECK(c.critic_passed);
    CHECK(load_change_store(o.store_dir / kChangeStoreFile) == r.records);
  }
  SUBCASE("two hallucinations: critic on keeps 5, critic off keeps 7") {
    auto on = testing::scripted(five_change_world(2));
    Stage1Options o;
    o.store_dir = testing::scratch_dir("s1on");
    const auto with_critic = run_stage1(seqs, *on.gateway, o);
    CHECK(with_critic.records.size() == 5);
    CHECK(with_critic.critic_rejected == 2);
    CHECK(with_critic.detected == 7);

    auto off = testing::scripted(five_change_world(2));
    o.store_dir = testing::scratch_dir("s1off");
    o.critic_enabled = false;
    const auto without = run_stage1(seqs, *off.gateway, o);
    CHECK(without.records.size() == 7);
    CHECK(off.backend->calls(RequestKind::self_critic) == 0);
    const auto on_ids = ids(with_critic.records), off_ids = ids(without.records);
    CHECK(std::includes(off_ids.begin(), off_ids.end(), on_ids.begin(), on_ids.end()));
  }
  SUBCASE("empty input") {
    auto a = testing::scripted(five_change_world(0));
    Stage1Options o;
    o.store_dir = testing::scratch_dir("s1empty");
    const auto r = run_stage1({}, *a.gateway, o);
    CHECK(r.records.empty());
    CHECK(r.complete);
    CHECK(load_change_store(o.store_dir / kChangeStoreFile).empty());
  }
}

TEST_CASE("records are grounded to the pair's timestamps and images") {
  const auto seqs = three_locations();
  auto a = testing::scripted(five_change_world(0));
  Stage1Options o;
  o.store_dir = testing::scratch_dir("ground");
  for (const auto& r : run_stage1(seqs, *a.gateway, o).records) {
    const auto& s = *std::find_if(seqs.begin(), seqs.end(), [&](auto& q) { return q.location_id == r.location_id; });
    CHECK(r.before_time == s.images[r.after_index - 1].timestamp);
    CHECK(r.after_time == s.images[r.after_index].timestamp);
    CHECK(r.after_uri == s.images[r.after_index].image_uri);
    CHECK(r.before_time <= r.after_time);
    CHECK(r.id == change_id(r.location_id, r.after_index, r.before_desc, r.after_desc));
  }
  CHECK_THROWS_AS(ground_change(seqs[0], RawChange{"a", "b", 10}, true), Error);
  CHECK_THROWS_AS(ground_change(seqs[0], RawChange{"a", "b", 0}, true), Error);
}

TEST_CASE("interrupted runs resume to the same store") {
  std::vector<ImageSequence> seqs;
  SyntheticWorld w;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 12; ++i) {
    const auto loc = "L" + std::to_string(i);
    seqs.push_back(sequence(loc, 10));
    for (int k = 0; k < 3; ++k) {
      const int at = std::uniform_int_distribution<int>(1, 9)(rng);
      w.changes.push_back(PlantedChange{"synth://" + loc + "/" + std::to_string(at), "before " + std::to_string(k),
                                        "after " + std::to_string(k), true, true, k != 2});
    }
  }
  w.failing_uris.insert("synth://L5/0");

  auto straight = testing::scripted(w);
  Stage1Options o;
  o.store_dir = testing::scratch_dir("straight");
  const auto full = run_stage1(seqs, *straight.gateway, o);
  CHECK(full.poisoned == 1);
  CHECK(full.poisoned_locations == std::vector<std::string>{"L5"});

  for (std::size_t step : {1, 4, 5}) {
    auto pieces = testing::scripted(w);
    Stage1Options p;
    p.store_dir = testing::scratch_dir("pieces");
    p.max_sequences = step;
    Stage1Result last;
    std::size_t rounds = 0;
    do {
      last = run_stage1(seqs, *pieces.gateway, p);
      ++rounds;
      REQUIRE(rounds < 20);
    } while (!last.complete);
    CHECK(last.records == full.records);
    CHECK(read_file(p.store_dir / kChangeStoreFile) == read_file(o.store_dir / kChangeStoreFile));
    // Poisoned sequences are checkpointed and not retried.
    CHECK(pieces.backend->calls(RequestKind::detect_changes) == straight.backend->calls(RequestKind::detect_changes));
  }

  SUBCASE("a torn tail in the part file is ignored") {
    auto torn = testing::scripted(w);
    Stage1Options p;
    p.store_dir = testing::scratch_dir("torn");
    p.max_sequences = 6;
    run_stage1(seqs, *torn.gateway, p);
    {
      std::ofstream f(p.store_dir / kChangePartFile, std::ios::app);
      f << "{\"id\": \"half";
    }
    p.max_sequences.reset();
    const auto r = run_stage1(seqs, *torn.gateway, p);
    CHECK(r.records == full.records);
  }
}

TEST_CASE("duplicate location ids are rejected") {
  auto a = testing::scripted(five_change_world(0));
  Stage1Options o;
  o.store_dir = testing::scratch_dir("dup");
  CHECK_THROWS_AS(run_stage1({sequence("A", 10), sequence("A", 10)}, *a.gateway, o), Error);
}

TEST_CASE("deduplication collapses normalized duplicates") {
  const auto s = sequence("A", 10);
  const auto a = ground_change(s, RawChange{"No  awning", "Red awning", 2}, true);
  const auto b = ground_change(s, RawChange{" no awning", "red   AWNING ", 2}, true);
  const auto c = ground_change(s, RawChange{"no awning", "red awning", 3}, true);
  CHECK(a.id == b.id);
  CHECK(a.id != c.id);
  CHECK(dedup_changes({a, b, c}).size() == 2);
}

TEST_CASE("pairs with changes use set semantics") {
  const auto s = sequence("L1", 10);
  const auto x = ground_change(s, RawChange{"a", "b", 2}, true);
  const auto y = ground_change(s, RawChange{"c", "d", 2}, true);
  const auto z = ground_change(s, RawChange{"e", "f", 3}, true);
  CHECK(pairs_with_changes({}).empty());
  CHECK(pairs_with_changes({x, y}).size() == 1);
  CHECK(pairs_with_changes({x, z}) == std::set<PairKey>{{"L1", 2}, {"L1", 3}});
}

TEST_CASE("embedding pair scores") {
  SyntheticWorld w;
  w.image_vectors["u:a"] = {1.0f, 0.0f};
  w.image_vectors["u:b"] = {1.0f, 1.0f};
  w.image_vectors["u:c"] = {1.0f, 0.0f};
  w.captions["u:a"] = "a";
  w.captions["u:b"] = "a";
  auto g = testing::scripted(w);
  CHECK(embedding_pair_score("u:a", "u:c", *g.gateway, EmbeddingPairMode::image_vector) == 0.0);
  CHECK(embedding_pair_score("u:a", "u:b", *g.gateway, EmbeddingPairMode::image_vector) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(embedding_pair_score("u:a", "u:b", *g.gateway, EmbeddingPairMode::caption) == 0.0);
}
