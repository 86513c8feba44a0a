#include <random>

#include "support.hpp"
#include "trendscope/evaluation.hpp"

using namespace trendscope;

namespace {

// AP by definition: for every positive, precision over the items ranked at or
// above it (score descending, earlier index first on ties).
double brute_ap(const std::vector<double>& s, const std::vector<bool>& l) {
  double sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    ++pos;
    std::size_t above = 0, above_pos = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool before = s[j] > s[i] || (s[j] == s[i] && j <= i);
      if (!before) continue;
      ++above;
      above_pos += l[j];
    }
    sum += double(above_pos) / double(above);
  }
  return sum / double(pos);
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {true, false, true, false}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(average_precision({0.9, 0.8, 0.1}, {true, true, false}) == 1.0);
  CHECK(average_precision({0.1, 0.2, 0.9}, {true, false, false}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(average_precision({0.1, 0.2}, {false, false}), Error);
  CHECK_THROWS_AS(average_precision({0.1}, {true, false}), Error);
  // A constant scorer is ranked in input order, so its AP depends on where the
  // positives happen to sit.
  CHECK(average_precision({0, 0, 0, 0}, {false, true, false, true}) == doctest::Approx(0.5));
  CHECK(average_precision({0, 0, 0, 0}, {true, false, true, false}) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("average precision matches the definition on random instances") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 20)(rng);
    std::vector<double> s(n);
    std::vector<bool> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, 5)(rng) / 5.0;
      l[i] = std::bernoulli_distribution(0.4)(rng);
    }
    l[std::uniform_int_distribution<int>(0, n - 1)(rng)] = true;
    CHECK(std::abs(average_precision(s, l) - brute_ap(s, l)) < 1e-12);
  }
}

TEST_CASE("a random scorer lands near the positive rate") {
  std::mt19937_64 rng(9);
  std::vector<double> s(20000);
  std::vector<bool> l(20000);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    l[i] = std::bernoulli_distribution(0.2)(rng);
    pos += l[i];
  }
  CHECK(average_precision(s, l) == doctest::Approx(double(pos) / s.size()).epsilon(0.1));
}

TEST_CASE("comparators on monotone and random worlds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mono = make_verification_world({WorldKind::monotone, 2000, 10, 50, seed});
    for (const auto& row : eval_hybrid_accuracy(mono, {25, 50, 100}, 3, seed)) CHECK(row.hybrid == 1.0);

    const auto rnd = make_verification_world({WorldKind::random, 2000, 10, 50, seed});
    for (std::size_t p = 0; p < rnd.proposals.size(); ++p) {
      const auto r = verify_world_proposal(rnd, p, {150, 50, false, 1});
      if (r.positive) CHECK(exhaustive_decision(rnd, p, 50));
      CHECK(r.oracle_queries_used <= 150);
    }
  }
}

TEST_CASE("AllTrue is perfect when every proposal is a true trend") {
  auto w = make_verification_world({WorldKind::informative, 500, 8, 10, 1});
  for (auto& p : w.proposals)
    for (std::size_t i = 0; i < 20; ++i) p.label[i] = true;
  const auto rows = eval_hybrid_accuracy(w, {10}, 3, 1);
  CHECK(rows[0].all_true == 1.0);
}

TEST_CASE("best threshold dominates every grid point") {
  const auto w = make_verification_world({WorldKind::noisy, 1000, 12, 40, 3});
  const auto s = threshold_search(w, 40, 200);
  REQUIRE(s.grid.size() == 200);
  for (double a : s.accuracy) CHECK(a <= s.accuracy[s.best]);
  CHECK(std::is_sorted(s.grid.begin(), s.grid.end()));
}

TEST_CASE("budget dry run") {
  const auto b = budget_dry_run(3'000'000, 1500, 500);
  CHECK(b.max_hybrid_queries == 1500);
  CHECK(b.reduction_factor == 2000.0);
  CHECK(budget_dry_run(100, 1500, 500).max_hybrid_queries == 100);  // shortlist is the whole pool
}

TEST_CASE("larger k never loses accuracy in strict mode") {
  const auto w = make_verification_world({WorldKind::noisy, 1500, 20, 50, 2});
  const auto acc = ablate_k(w, {25, 50}, {2, 3, 4, 5});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(acc.at(2)[i] <= acc.at(3)[i]);
    CHECK(acc.at(3)[i] <= acc.at(4)[i]);
    CHECK(acc.at(4)[i] <= acc.at(5)[i]);
  }
}

TEST_CASE("critic statistics") {
  SyntheticWorld w;
  w.changes.push_back(PlantedChange{"u1", "a", "b", true});
  w.changes.push_back(PlantedChange{"u2", "c", "d", true});
  w.changes.push_back(PlantedChange{"u3", "e", "f", false});
  auto rec = [](std::string uri, std::string b, std::string a) {
    ChangeRecord r;
    r.after_uri = std::move(uri);
    r.before_desc = std::move(b);
    r.after_desc = std::move(a);
    return r;
  };
  const auto st = critic_stats({rec("u1", "A", "b"), rec("u3", "e", "f")}, w);
  CHECK(st.records == 2);
  CHECK(st.true_records == 1);
  CHECK(st.precision == 0.5);
  CHECK(st.recall == 0.5);
}

TEST_CASE("subset AP spread is deterministic") {
  std::mt19937_64 rng(12);
  std::vector<double> s(400);
  std::vector<bool> l(400);
  for (std::size_t i = 0; i < s.size(); ++i) {
    l[i] = std::bernoulli_distribution(0.3)(rng);
    s[i] = std::normal_distribution<double>(l[i] ? 1.0 : 0.0, 1.0)(rng);
  }
  const auto a = subset_ap_stddev(s, l, 200, 0.75, 4);
  const auto b = subset_ap_stddev(s, l, 200, 0.75, 4);
  CHECK(a.stddev == b.stddev);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev > 0.0);
  CHECK(a.stddev < 0.1);
  CHECK_THROWS_AS(subset_ap_stddev(s, l, 10, 0.0, 1), Error);
}

TEST_CASE("change detection evaluation needs labels for every pair") {
  ImageSequence s;
  s.location_id = "L";
  for (int i = 0; i < 4; ++i)
    s.images.push_back({"p" + std::to_string(i), "synth://L/" + std::to_string(i), testing::day(2015 + i, 1, 1)});
  std::vector<LabeledPair> labels{{"L", 1, false}, {"L", 2, true}};
  const auto scorer = [](const ImageSequence&, int i) { return i == 2 ? 1.0 : 0.0; };
  CHECK_THROWS_WITH_AS(eval_change_detection(scorer, {s}, labels), doctest::Contains("L:3"), Error);
  labels.push_back({"L", 3, false});
  CHECK(eval_change_detection(scorer, {s}, labels) == 1.0);

  ChangeRecord r;
  r.location_id = "L";
  r.after_index = 3;
  CHECK(eval_change_detection(analyst_detector({r}), {s}, labels) == doctest::Approx(1.0 / 3.0));

  SyntheticWorld w;
  w.changes.push_back(PlantedChange{"synth://L/2", "x", "y", true});
  w.changes.push_back(PlantedChange{"synth://L/3", "x", "z", false});
  const auto derived = pair_labels_from_world({s}, w);
  REQUIRE(derived.size() == 3);
  CHECK_FALSE(derived[0].has_change);
  CHECK(derived[1].has_change);
  CHECK_FALSE(derived[2].has_change);
}
