#include <random>

#include "support.hpp"
#include "trendscope/change_detection.hpp"
#include "trendscope/trends.hpp"

using namespace trendscope;

namespace {

ChangeRecord change(const std::string& loc, const std::string& before, const std::string& after,
                    Timestamp t0 = testing::day(2018, 1, 1), Timestamp t1 = testing::day(2019, 1, 1)) {
  ChangeRecord c;
  c.location_id = loc;
  c.before_desc = before;
  c.after_desc = after;
  c.after_index = 1;
  c.id = change_id(loc, 1, before, after);
  c.before_time = t0;
  c.after_time = t1;
  c.critic_passed = true;
  return c;
}

RankOracle scripted_oracle(std::vector<Verdict> v) {
  return [v = std::move(v)](std::size_t rank) { return v.at(rank); };
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(100 + i));
  return out;
}

TrendProposal proposal(std::string id, std::size_t words, std::vector<std::string> sources = {}) {
  TrendProposal p;
  p.proposal_id = std::move(id);
  p.text = p.proposal_id;
  p.word_count = words;
  p.source_change_ids = std::move(sources);
  p.member_count = p.source_change_ids.size();
  return p;
}

}  // namespace

TEST_CASE("hybrid verification decides by the count of confirmations") {
  const auto Y = Verdict::yes, N = Verdict::no, F = Verdict::failed;
  SUBCASE("early exit at the N-th yes") {
    const auto r = hybrid_verify("p", names(6), {6, 2, false, 1}, scripted_oracle({N, Y, Y, Y, Y, Y}));
    CHECK(r.positive);
    CHECK(r.oracle_queries_used == 3);
    CHECK(r.confirmed_change_ids == std::vector<std::string>{"c101", "c102"});
  }
  SUBCASE("strict mode queries all k") {
    const auto r = hybrid_verify("p", names(6), {6, 2, true, 1}, scripted_oracle({N, Y, Y, Y, N, Y}));
    CHECK(r.positive);
    CHECK(r.oracle_queries_used == 6);
    CHECK(r.confirmed_change_ids.size() == 4);
  }
  SUBCASE("stops once N is out of reach") {
    const auto r = hybrid_verify("p", names(5), {5, 3, false, 1}, scripted_oracle({N, N, N, Y, Y}));
    CHECK_FALSE(r.positive);
    CHECK(r.oracle_queries_used == 3);
  }
  SUBCASE("too many failures is diagnosed") {
    const auto r = hybrid_verify("p", names(4), {4, 3, true, 1}, scripted_oracle({F, Y, F, Y}));
    CHECK_FALSE(r.positive);
    CHECK(r.failures == 2);
    CHECK(r.diagnostic.find("cannot be reached") != std::string::npos);
  }
  SUBCASE("short pools cannot reach N") {
    const auto r = hybrid_verify("p", names(2), {5, 3, false, 1}, scripted_oracle({Y, Y}));
    CHECK_FALSE(r.positive);
    CHECK(r.oracle_queries_used == 0);
    CHECK(r.diagnostic.find("only 2 candidates") != std::string::npos);
  }
  CHECK_THROWS_AS(hybrid_verify("p", names(3), {2, 3, false, 1}, scripted_oracle({})), Error);
  CHECK_THROWS_AS(hybrid_verify("p", names(3), {2, 0, false, 1}, scripted_oracle({})), Error);
}

TEST_CASE("hybrid verification invariants over random oracles") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t pool = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t k1 = n + std::uniform_int_distribution<std::size_t>(0, 30)(rng);
    const std::size_t k2 = k1 + std::uniform_int_distribution<std::size_t>(0, 30)(rng);
    const double p_yes = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<Verdict> v(pool);
    for (auto& x : v) {
      const double u = std::uniform_real_distribution<double>(0, 1)(rng);
      x = u < p_yes ? Verdict::yes : (u < p_yes + 0.05 ? Verdict::failed : Verdict::no);
    }
    const std::size_t exhaustive_yes = std::count(v.begin(), v.end(), Verdict::yes);
    const std::size_t fan = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const bool strict = trial % 3 == 0;
    const auto a = hybrid_verify("p", names(pool), {k1, n, strict, fan}, scripted_oracle(v));
    const auto b = hybrid_verify("p", names(pool), {k2, n, strict, fan}, scripted_oracle(v));
    CHECK(a.oracle_queries_used <= k1);
    CHECK(a.positive == (a.confirmed_change_ids.size() >= n));
    if (a.positive) CHECK(exhaustive_yes >= n);  // soundness
    if (a.positive) CHECK(b.positive);            // monotone in k
    for (const auto& id : a.confirmed_change_ids)
      CHECK(std::find(b.confirmed_change_ids.begin(), b.confirmed_change_ids.end(), id) !=
            b.confirmed_change_ids.end());
    const auto serial = hybrid_verify("p", names(pool), {k1, n, strict, 1}, scripted_oracle(v));
    CHECK(serial.positive == a.positive);
    if (strict) CHECK(serial.confirmed_change_ids == a.confirmed_change_ids);
  }
}

TEST_CASE("pool of ten with four positives near the proposal") {
  SyntheticWorld w;
  w.dim = 32;
  const std::string trend = "A bakery opened at the storefront.";
  w.add_text(trend, "bakery", 0.0);
  std::vector<ChangeRecord> pool;
  for (int i = 0; i < 5; ++i) {
    auto c = change("L" + std::to_string(i), "store " + std::to_string(i), "bakery " + std::to_string(i));
    w.add_text(change_text(c), "bakery", 0.2);
    if (i == 4) w.memberships[{normalize_text(change_text(c)), normalize_text(trend)}] = false;
    pool.push_back(c);
  }
  for (int i = 5; i < 10; ++i) pool.push_back(change("L" + std::to_string(i), "tree " + std::to_string(i), "stump"));
  auto a = testing::scripted(w);
  const auto cp = ChangePool::build(pool, *a.gateway);
  REQUIRE(cp.size() == 10);

  TrendProposal p;
  p.proposal_id = make_proposal_id(trend);
  p.text = trend;
  const auto top5 = cp.index().knn(a.gateway->embed_text(trend), 5);
  for (const auto& nb : top5) CHECK(nb.item_id.size() > 0);
  std::size_t exhaustive = 0;
  for (const auto& c : pool) exhaustive += w.belongs(change_text(c), trend);
  REQUIRE(exhaustive == 4);

  for (bool strict : {false, true}) {
    const auto r = verify_trend(p, cp, *a.gateway, {5, 3, strict, 2});
    CHECK(r.positive);
    CHECK(r.confirmed_change_ids.size() >= 3);
    CHECK(r.oracle_queries_used <= 5);
    CHECK(r.positive == (exhaustive >= 3));
  }
  const auto strict = verify_trend(p, cp, *a.gateway, {5, 3, true, 1});
  CHECK(strict.confirmed_change_ids.size() == 4);

  CHECK_FALSE(verify_trend(p, ChangePool::build({}, *a.gateway), *a.gateway, {5, 3, false, 1}).positive);
  CHECK(verify_trend(p, ChangePool::build({}, *a.gateway), *a.gateway, {5, 3, false, 1}).oracle_queries_used == 0);
}

TEST_CASE("default verification parameters") {
  const VerifyOptions o;
  CHECK(o.n == 500);
  CHECK(o.k == 1500);
  CHECK(kDefaultKMultiple * kDefaultN == 1500);
}

TEST_CASE("one frequent planted trend yields exactly one proposal") {
  SyntheticWorld w;
  w.dim = 48;
  const std::string trend = "A storefront gained outdoor dining tables.";
  w.add_text(trend, "dining", 0.0);
  std::vector<ChangeRecord> changes;
  for (int i = 0; i < 600; ++i) {
    const std::string site = "site " + std::to_string(i);
    auto c = change("L" + std::to_string(i), "The storefront at " + site + " had no tables.",
                    "The storefront at " + site + " has outdoor dining tables now.");
    const std::string specific = "The storefront at " + site + " gained outdoor dining tables.";
    w.add_text(specific, "dining", 0.25);
    w.add_text(change_text(c), "dining", 0.25);
    w.add_abstractions(c.before_desc, c.after_desc,
                       AbstractionScript{{"The storefront at " + site, "A storefront"},
                                         {"gained outdoor dining tables"},
                                         {specific, trend}});
    changes.push_back(c);
  }
  for (int i = 0; i < 40; ++i)
    changes.push_back(change("U" + std::to_string(i), "thing " + std::to_string(i) + " alpha",
                             "other " + std::to_string(i * 7) + " omega " + std::to_string(i)));
  auto a = testing::scripted(w);
  ProposeOptions o;
  o.min_members = 9;
  const auto r = propose_trends(changes, *a.gateway, o);
  CHECK(r.items.size() == 600 * 2 + 40);
  REQUIRE(r.proposals.size() == 1);
  const auto* script = w.script_for(r.proposals[0].text);
  REQUIRE(script != nullptr);
  CHECK(script->topic == "dining");
  CHECK(r.proposals[0].source_change_ids.size() == 600);
  CHECK(r.proposals[0].member_count == 1200);

  // The surviving proposal verifies at N = 3, k = 9.
  const auto pool = ChangePool::build(changes, *a.gateway);
  CHECK(verify_trend(r.proposals[0], pool, *a.gateway, {9, 3, false, 1}).positive);
}

TEST_CASE("unique changes produce no proposals at k above one") {
  SyntheticWorld w;
  std::vector<ChangeRecord> changes;
  for (int i = 0; i < 30; ++i)
    changes.push_back(change("L" + std::to_string(i), "word" + std::to_string(i), "zz" + std::to_string(i * 13)));
  auto a = testing::scripted(w);
  ProposeOptions o;
  o.min_members = 2;
  const auto r = propose_trends(changes, *a.gateway, o);
  CHECK(r.proposals.empty());
  CHECK(r.clusters == 30);
}

TEST_CASE("a three-by-three abstraction grid feeds nine items into clustering") {
  SyntheticWorld w;
  const auto c = change("L", "The single door to the right of the main entrance has a sign above it that reads 151.",
                        "The sign above the single door is blank.");
  std::vector<std::string> texts;
  for (auto place : {"the single door to the right of the main entrance", "the single door", "the door"})
    for (auto what : {"changed from reading 151 to being blank", "changed from reading 151 to something else", "changed"})
      texts.push_back(std::string("The sign above ") + place + " " + what + ".");
  w.add_abstractions(c.before_desc, c.after_desc,
                     AbstractionScript{{"p1", "p2", "p3"}, {"c1", "c2", "c3"}, texts});
  auto a = testing::scripted(w);
  ProposeOptions o;
  o.min_members = 1;
  const auto r = propose_trends({c}, *a.gateway, o);
  REQUIRE(r.items.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(r.items[i].level == i);
    CHECK(r.items[i].text == texts[i]);
  }
  std::size_t covered = 0;
  for (const auto& p : r.proposals) covered += p.member_count;
  CHECK(covered >= 9);
}

TEST_CASE("proposal ids are stable and collision-free") {
  CHECK(make_proposal_id("A  Bakery") == make_proposal_id("a bakery"));
  CHECK(make_proposal_id("a bakery").size() == 13);
  EmbeddingMatrix<float> m(2, 3);
  m << 1, 1, 0, 0, 0, 1;
  std::vector<AbstractionItem> items{{"c1", 0, "same"}, {"c2", 0, "same"}, {"c3", 0, "other"}};
  ProposeOptions o;
  o.min_members = 1;
  const auto r = propose_from_items(items, m, o);
  REQUIRE(r.proposals.size() == 2);
  CHECK(r.proposals[0].source_change_ids == std::vector<std::string>{"c1", "c2"});
}

TEST_CASE("time windows") {
  const auto w = parse_time_window("2018-01-01..2019-12-31");
  CHECK(w.start == testing::day(2018, 1, 1, 0));
  CHECK(w.end == testing::day(2019, 12, 31, 0) + std::chrono::seconds(86399));
  const auto r = parse_time_window("2018-01-01T00:00:00Z..2018-06-01T12:00:00+02:00");
  CHECK(r.end == testing::day(2018, 6, 1, 10));
  CHECK_THROWS_AS(parse_time_window("2019-01-01..2018-01-01"), Error);
  CHECK_THROWS_AS(parse_time_window("2019-01-01"), Error);

  const auto inside = change("a", "x", "y", testing::day(2018, 3, 1), testing::day(2018, 9, 1));
  const auto early = change("b", "x", "y", testing::day(2017, 3, 1), testing::day(2018, 9, 1));
  const auto late = change("c", "x", "y", testing::day(2018, 3, 1), testing::day(2020, 9, 1));
  const auto kept = filter_time({inside, early, late}, w);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].id == inside.id);
  const TimeWindow span{testing::day(2017, 3, 1), testing::day(2020, 9, 1)};
  CHECK(filter_time({inside, early, late}, span).size() == 3);
}

TEST_CASE("subject filtering") {
  SyntheticWorld w;
  w.dim = 32;
  const std::string subject = "A retail store has changed";
  w.add_text(subject, "retail", 0.0);
  std::vector<ChangeRecord> changes;
  for (int i = 0; i < 10; ++i) {
    auto c = change("L" + std::to_string(i), "shop " + std::to_string(i), "new shop " + std::to_string(i),
                    testing::day(2010 + i, 1, 1), testing::day(2010 + i, 6, 1));
    if (i % 3 == 0 && i > 0) w.add_text(change_text(c), "retail", 0.2);
    changes.push_back(c);
  }
  auto a = testing::scripted(w);
  SUBCASE("the three on-subject changes survive") {
    const auto r = filter_subject(changes, subject, 5, *a.gateway);
    REQUIRE(r.kept.size() == 3);
    CHECK(r.kept[0].id == changes[3].id);
    CHECK(r.kept[1].id == changes[6].id);
    CHECK(r.kept[2].id == changes[9].id);
    CHECK(r.queried == 5);
  }
  SUBCASE("an accepting oracle over the whole pool is the identity") {
    for (const auto& c : changes) w.memberships[{normalize_text(change_text(c)), normalize_text(subject)}] = true;
    auto yes = testing::scripted(w);
    CHECK(filter_subject(changes, subject, changes.size(), *yes.gateway).kept == changes);
  }
  SUBCASE("time and subject filters commute without truncation") {
    const TimeWindow win{testing::day(2014, 1, 1), testing::day(2017, 1, 1)};
    const auto ts = filter_subject(filter_time(changes, win), subject, filter_time(changes, win).size(), *a.gateway).kept;
    const auto st = filter_time(filter_subject(changes, subject, changes.size(), *a.gateway).kept, win);
    CHECK(ts == st);
    CHECK(ts.size() == 1);
  }
  CHECK_THROWS_AS(filter_subject(changes, subject, 11, *a.gateway), Error);
}

TEST_CASE("ranking modes") {
  SUBCASE("most detailed first") {
    const auto r = rank_proposals({proposal("short", 5), proposal("long", 12)}, RankMode::most_detailed);
    CHECK(r[0].proposal_id == "long");
  }
  SUBCASE("largest growth between periods first") {
    const PeriodCounts counts{{"grow", {10, 400}}, {"flat", {300, 310}}};
    const auto r = rank_proposals({proposal("flat", 5), proposal("grow", 5)}, RankMode::period_delta, &counts);
    CHECK(r[0].proposal_id == "grow");
    CHECK_THROWS_AS(rank_proposals({}, RankMode::period_delta), Error);
  }
  SUBCASE("period counts come from source change times") {
    const auto a = change("a", "x", "y", testing::day(2012, 1, 1), testing::day(2012, 6, 1));
    const auto b = change("b", "x", "y", testing::day(2020, 1, 1), testing::day(2020, 6, 1));
    const auto c = change("c", "x", "y", testing::day(2021, 1, 1), testing::day(2021, 6, 1));
    const auto counts = period_counts({proposal("p", 3, {a.id, b.id, c.id})}, {a, b, c},
                                      parse_time_window("2010-01-01..2014-12-31"),
                                      parse_time_window("2019-01-01..2022-12-31"));
    CHECK(counts.at("p") == std::pair<std::size_t, std::size_t>{1, 2});
  }
  SUBCASE("stratified alternates between word-count buckets") {
    const auto r = rank_proposals({proposal("s1", 3), proposal("s2", 4), proposal("l1", 11), proposal("l2", 12)},
                                  RankMode::stratified_by_word_count);
    std::vector<std::string> order;
    for (const auto& p : r) order.push_back(p.proposal_id);
    CHECK(order == std::vector<std::string>{"l2", "s2", "l1", "s1"});
  }
  CHECK(word_bucket(1) == 0);
  CHECK(word_bucket(4) == 0);
  CHECK(word_bucket(5) == 1);
  CHECK_THROWS_AS(rank_mode_from_string("loudest"), Error);
  CHECK(rank_mode_from_string("stratified") == RankMode::stratified_by_word_count);
}

TEST_CASE("unusual findings become pseudo-changes") {
  SyntheticWorld w;
  w.findings["synth://A/1"] = {"A large, abstract sculpture at plaza 1."};
  w.findings["synth://B/0"] = {"A giant inflatable rat.", "A piano standing on the street."};
  auto a = testing::scripted(w);
  std::vector<ImageSequence> seqs;
  for (auto loc : {"A", "B"}) {
    ImageSequence s;
    s.location_id = loc;
    for (int i = 0; i < 3; ++i)
      s.images.push_back({std::string(loc) + std::to_string(i), "synth://" + std::string(loc) + "/" + std::to_string(i),
                          testing::day(2015 + i, 1, 1)});
    seqs.push_back(s);
  }
  const auto r = unusual_query(seqs, *a.gateway);
  CHECK(r.images == 6);
  REQUIRE(r.records.size() == 3);
  for (const auto& c : r.records) {
    CHECK(c.before_desc.empty());
    CHECK(c.after_index == 0);
    CHECK(c.before_time == c.after_time);
    CHECK_FALSE(c.critic_passed);
  }
  ProposeOptions o;
  o.min_members = 2;
  CHECK(propose_trends(r.records, *a.gateway, o).proposals.empty());
  CHECK(unusual_query({}, *a.gateway).records.empty());
}

TEST_CASE("trend and proposal stores round trip") {
  const auto dir = testing::scratch_dir("stores");
  auto p = proposal("t1", 4, {"a", "b"});
  p.text = "A text";
  VerificationResult v;
  v.proposal_id = "t1";
  v.positive = true;
  v.confirmed_change_ids = {"b", "a"};
  v.oracle_queries_used = 7;
  save_trend_store(dir / "t.jsonl", {{p, v}});
  const auto back = load_trend_store(dir / "t.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].proposal == p);
  CHECK(back[0].verification.confirmed_change_ids == v.confirmed_change_ids);
  CHECK(back[0].verification.oracle_queries_used == 7);
  CHECK(read_jsonl(dir / "t.jsonl")[0]["decision"] == "positive");
  save_proposals(dir / "p.jsonl", {p});
  CHECK(load_proposals(dir / "p.jsonl") == std::vector<TrendProposal>{p});
}
