#include "trendscope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace trendscope {

double average_precision(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  if (std::find(labels.begin(), labels.end(), true) == labels.end())
    throw Error("average precision needs at least one positive label");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error("non-finite score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!labels[order[rank]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return sum / static_cast<double>(hits);
}

Json to_json(const LabeledPair& l) {
  return Json{{"location_id", l.location_id}, {"pair_index", l.pair_index}, {"has_change", l.has_change}};
}

LabeledPair labeled_pair_from_json(const Json& j) {
  return LabeledPair{j.at("location_id").get<std::string>(), j.at("pair_index").get<int>(),
                     j.at("has_change").get<bool>()};
}

Json to_json(const LabeledMembership& l) {
  return Json{{"trend_id", l.trend_id}, {"change_id", l.change_id}, {"belongs", l.belongs}};
}

LabeledMembership labeled_membership_from_json(const Json& j) {
  return LabeledMembership{j.at("trend_id").get<std::string>(), j.at("change_id").get<std::string>(),
                           j.at("belongs").get<bool>()};
}

PairDetector analyst_detector(const std::vector<ChangeRecord>& records) {
  auto pairs = std::make_shared<std::set<PairKey>>(pairs_with_changes(records));
  return [pairs](const ImageSequence& seq, int pair_index) {
    return pairs->count({seq.location_id, pair_index}) ? 1.0 : 0.0;
  };
}

PairDetector distance_detector(ImagePairScorer scorer) {
  return [scorer = std::move(scorer)](const ImageSequence& seq, int pair_index) {
    const auto i = static_cast<std::size_t>(pair_index);
    return scorer(seq.images.at(i - 1), seq.images.at(i));
  };
}

double eval_change_detection(const PairDetector& detector,
                             const std::vector<ImageSequence>& sequences,
                             const std::vector<LabeledPair>& labels) {
  std::map<PairKey, bool> truth;
  for (const auto& l : labels) {
    if (!truth.emplace(PairKey{l.location_id, l.pair_index}, l.has_change).second)
      throw Error("duplicate label for " + l.location_id + " pair " + std::to_string(l.pair_index));
  }
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (const auto& s : sequences) {
    for (int i = 1; i < static_cast<int>(s.images.size()); ++i) {
      if (truth.count({s.location_id, i})) continue;
      if (++missing_count <= 10) missing.push_back(s.location_id + ":" + std::to_string(i));
    }
  }
  if (missing_count) {
    std::string msg = std::to_string(missing_count) + " image pairs lack labels:";
    for (const auto& m : missing) msg += " " + m;
    if (missing_count > missing.size()) msg += " ...";
    throw Error(msg);
  }
  std::vector<double> scores;
  std::vector<bool> flags;
  for (const auto& s : sequences) {
    for (int i = 1; i < static_cast<int>(s.images.size()); ++i) {
      scores.push_back(detector(s, i));
      flags.push_back(truth.at({s.location_id, i}));
    }
  }
  return average_precision(scores, flags);
}

double eval_membership(const MembershipScorer& scorer, const std::vector<LabeledMembership>& labels) {
  std::vector<double> scores;
  std::vector<bool> flags;
  for (const auto& l : labels) {
    scores.push_back(scorer(l));
    flags.push_back(l.belongs);
  }
  return average_precision(scores, flags);
}

std::vector<LabeledPair> pair_labels_from_world(const std::vector<ImageSequence>& sequences,
                                                const SyntheticWorld& world) {
  std::vector<LabeledPair> out;
  for (const auto& s : sequences) {
    for (std::size_t i = 1; i < s.images.size(); ++i) {
      bool real = false;
      for (const auto* pc : world.changes_at(s.images[i].image_uri)) real = real || pc->real;
      out.push_back(LabeledPair{s.location_id, static_cast<int>(i), real});
    }
  }
  return out;
}

SubsetStats subset_ap_stddev(const std::vector<double>& scores, const std::vector<bool>& labels,
                             std::size_t subsets, double fraction, std::uint64_t seed) {
  if (scores.size() != labels.size() || scores.empty()) throw Error("bad evaluation set");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subset fraction must be in (0, 1]");
  if (subsets < 2) throw Error("need at least two subsets");
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(scores.size()))));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(scores.size());
  std::vector<double> aps;
  aps.reserve(subsets);
  std::size_t redraws = 0;
  while (aps.size() < subsets) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i)
      std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng)]);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<double> s;
    std::vector<bool> l;
    for (std::size_t i = 0; i < m; ++i) {
      s.push_back(scores[idx[i]]);
      l.push_back(labels[idx[i]]);
    }
    if (std::find(l.begin(), l.end(), true) == l.end()) {
      if (++redraws > 100 * subsets) throw Error("subsets keep missing every positive");
      continue;
    }
    aps.push_back(average_precision(s, l));
  }
  SubsetStats st;
  st.subsets = aps.size();
  st.mean = std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
  double ss = 0.0;
  for (double a : aps) ss += (a - st.mean) * (a - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(aps.size() - 1));
  return st;
}

// ---------------------------------------------------------------------------

WorldKind world_kind_from_string(std::string_view s) {
  if (s == "random") return WorldKind::random;
  if (s == "monotone") return WorldKind::monotone;
  if (s == "noisy") return WorldKind::noisy;
  if (s == "informative") return WorldKind::informative;
  throw Error("unknown world kind: " + std::string(s));
}

std::string_view to_string(WorldKind k) {
  switch (k) {
    case WorldKind::random: return "random";
    case WorldKind::monotone: return "monotone";
    case WorldKind::noisy: return "noisy";
    case WorldKind::informative: return "informative";
  }
  return "?";
}

std::size_t WorldProposal::positives() const {
  return static_cast<std::size_t>(std::count(label.begin(), label.end(), true));
}

VerificationWorld make_verification_world(const WorldSpec& spec) {
  if (spec.pool_size == 0 || spec.typical_n == 0) throw Error("empty verification world");
  std::mt19937_64 rng(mix64(spec.seed) ^ static_cast<std::uint64_t>(spec.kind));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto normal = [&](double mu, double sigma) {
    return std::clamp(std::normal_distribution<double>(mu, sigma)(rng), 0.0, 2.0);
  };

  VerificationWorld w;
  w.change_ids.reserve(spec.pool_size);
  for (std::size_t i = 0; i < spec.pool_size; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "c%08zu", i);
    w.change_ids.emplace_back(id);
  }
  const auto lo = std::max<std::size_t>(1, spec.typical_n / 4);
  const auto hi = std::min(spec.pool_size, spec.typical_n * 5 / 2);
  std::vector<std::size_t> rows(spec.pool_size);
  for (std::size_t p = 0; p < spec.proposals; ++p) {
    WorldProposal wp;
    wp.distance.resize(spec.pool_size);
    wp.label.assign(spec.pool_size, false);
    const auto count = std::uniform_int_distribution<std::size_t>(std::min(lo, hi), hi)(rng);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(rows[i], rows[std::uniform_int_distribution<std::size_t>(i, rows.size() - 1)(rng)]);
      wp.label[rows[i]] = true;
    }
    const double offset = uniform(0.0, 0.3);
    const double sigma = uniform(0.02, 0.1);
    for (std::size_t i = 0; i < spec.pool_size; ++i) {
      const bool pos = wp.label[i];
      double d = 0.0;
      switch (spec.kind) {
        case WorldKind::random: d = uniform(0.0, 1.0); break;
        case WorldKind::monotone:
          d = pos ? offset + uniform(0.0, 0.39) : offset + uniform(0.41, 1.0);
          break;
        case WorldKind::noisy: d = normal(offset + (pos ? 0.3 : 0.45), 0.12); break;
        case WorldKind::informative: d = normal(offset + (pos ? 0.25 : 0.6), sigma); break;
      }
      wp.distance[i] = d;
    }
    w.proposals.push_back(std::move(wp));
  }
  return w;
}

std::vector<std::size_t> ranked_shortlist(const VerificationWorld& world, std::size_t proposal,
                                          std::size_t k) {
  const auto& d = world.proposals.at(proposal).distance;
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const std::size_t take = std::min(k, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (d[a] != d[b]) return d[a] < d[b];
                      return world.change_ids[a] < world.change_ids[b];
                    });
  rows.resize(take);
  return rows;
}

VerificationResult verify_world_proposal(const VerificationWorld& world, std::size_t proposal,
                                         const VerifyOptions& options) {
  const auto rows = ranked_shortlist(world, proposal, options.k);
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (auto r : rows) ids.push_back(world.change_ids[r]);
  const auto& label = world.proposals[proposal].label;
  return hybrid_verify("P" + std::to_string(proposal), ids, options,
                       [&](std::size_t rank) { return label[rows[rank]] ? Verdict::yes : Verdict::no; });
}

bool exhaustive_decision(const VerificationWorld& world, std::size_t proposal, std::size_t n) {
  return world.proposals.at(proposal).positives() >= n;
}

ThresholdSearch threshold_search(const VerificationWorld& world, std::size_t n, std::size_t grid_size) {
  if (grid_size < 2) throw Error("threshold grid needs at least two points");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<std::vector<double>> sorted;
  for (const auto& p : world.proposals) {
    sorted.push_back(p.distance);
    std::sort(sorted.back().begin(), sorted.back().end());
    if (!sorted.back().empty()) {
      lo = std::min(lo, sorted.back().front());
      hi = std::max(hi, sorted.back().back());
    }
  }
  ThresholdSearch s;
  if (world.proposals.empty() || !std::isfinite(lo)) return s;
  s.grid.resize(grid_size);
  s.accuracy.resize(grid_size);
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double t = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_size - 1);
    s.grid[g] = t;
    std::size_t correct = 0;
    for (std::size_t p = 0; p < sorted.size(); ++p) {
      const auto within = static_cast<std::size_t>(
          std::upper_bound(sorted[p].begin(), sorted[p].end(), t) - sorted[p].begin());
      correct += (within >= n) == exhaustive_decision(world, p, n);
    }
    s.accuracy[g] = static_cast<double>(correct) / static_cast<double>(sorted.size());
    if (s.accuracy[g] > s.accuracy[s.best]) s.best = g;
  }
  return s;
}

std::vector<ComparatorAccuracy> eval_hybrid_accuracy(const VerificationWorld& world,
                                                     const std::vector<std::size_t>& n_values,
                                                     std::size_t k_multiple, std::uint64_t seed) {
  std::vector<ComparatorAccuracy> out;
  const std::size_t P = world.proposals.size();
  if (P == 0) throw Error("world has no proposals");
  for (std::size_t n : n_values) {
    ComparatorAccuracy row;
    row.n = n;
    row.k = k_multiple * n;
    const VerifyOptions options{row.k, n, /*strict=*/true, 1};
    std::mt19937_64 rng(mix64(seed ^ n));
    std::vector<std::size_t> rows(world.pool_size());
    std::size_t all_true = 0, rand_ok = 0, hybrid_ok = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const bool truth = exhaustive_decision(world, p, n);
      all_true += truth;
      // RandMLLM: the same budget spent on uniformly drawn changes.
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      const std::size_t take = std::min(row.k, rows.size());
      std::size_t yes = 0;
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(rows[i], rows[std::uniform_int_distribution<std::size_t>(i, rows.size() - 1)(rng)]);
        yes += world.proposals[p].label[rows[i]];
      }
      rand_ok += (yes >= n) == truth;
      hybrid_ok += verify_world_proposal(world, p, options).positive == truth;
    }
    const auto search = threshold_search(world, n);
    row.all_true = static_cast<double>(all_true) / static_cast<double>(P);
    row.rand_mllm = static_cast<double>(rand_ok) / static_cast<double>(P);
    row.hybrid = static_cast<double>(hybrid_ok) / static_cast<double>(P);
    row.threshold = search.accuracy.empty() ? 0.0 : search.accuracy[search.best];
    row.threshold_value = search.grid.empty() ? 0.0 : search.grid[search.best];
    out.push_back(row);
  }
  return out;
}

std::map<std::size_t, std::vector<double>> ablate_k(const VerificationWorld& world,
                                                    const std::vector<std::size_t>& n_values,
                                                    const std::vector<std::size_t>& k_multiples) {
  std::map<std::size_t, std::vector<double>> out;
  const std::size_t P = world.proposals.size();
  if (P == 0) throw Error("world has no proposals");
  for (std::size_t m : k_multiples) {
    auto& acc = out[m];
    for (std::size_t n : n_values) {
      const VerifyOptions options{m * n, n, true, 1};
      std::size_t ok = 0;
      for (std::size_t p = 0; p < P; ++p)
        ok += verify_world_proposal(world, p, options).positive == exhaustive_decision(world, p, n);
      acc.push_back(static_cast<double>(ok) / static_cast<double>(P));
    }
  }
  return out;
}

BudgetReport budget_dry_run(std::size_t pool_size, std::size_t k, std::size_t n) {
  BudgetReport r;
  r.pool_size = pool_size;
  r.k = k;
  r.exhaustive_queries = pool_size;
  std::vector<std::string> shortlist(std::min(k, pool_size));
  for (std::size_t i = 0; i < shortlist.size(); ++i) shortlist[i] = std::to_string(i);
  std::size_t calls = 0;
  hybrid_verify("dry-run", shortlist, VerifyOptions{k, n, true, 1}, [&](std::size_t) {
    ++calls;
    return Verdict::no;
  });
  r.max_hybrid_queries = calls;
  r.reduction_factor = calls ? static_cast<double>(pool_size) / static_cast<double>(calls) : 0.0;
  return r;
}

CriticStats critic_stats(const std::vector<ChangeRecord>& records, const SyntheticWorld& world) {
  CriticStats st;
  std::set<std::tuple<std::string, std::string, std::string>> real;
  for (const auto& pc : world.changes) {
    if (!pc.real) continue;
    ++st.real_planted;
    real.emplace(pc.after_uri, normalize_text(pc.before), normalize_text(pc.after));
  }
  st.records = records.size();
  for (const auto& r : records)
    st.true_records += real.count({r.after_uri, normalize_text(r.before_desc), normalize_text(r.after_desc)});
  st.precision = st.records ? static_cast<double>(st.true_records) / static_cast<double>(st.records) : 0.0;
  st.recall = st.real_planted ? static_cast<double>(st.true_records) / static_cast<double>(st.real_planted) : 0.0;
  return st;
}

std::string render_accuracy_table(const std::vector<ComparatorAccuracy>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %6s %8s %10s %9s %8s\n", "N", "k", "AllTrue", "Threshold",
                "RandMLLM", "Hybrid");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%6zu %6zu %8.3f %10.3f %9.3f %8.3f\n", r.n, r.k, r.all_true,
                  r.threshold, r.rand_mllm, r.hybrid);
    out << line;
  }
  return out.str();
}

}  // namespace trendscope
