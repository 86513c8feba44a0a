#include "trendscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "trendscope/parsing.hpp"

namespace trendscope {

EmbeddingVector<float> seeded_unit_vector(std::string_view key, int dim, std::uint64_t seed) {
  if (dim <= 0) throw Error("embedding dimension must be positive");
  const std::uint64_t h = fnv1a64(key) ^ mix64(seed);
  Eigen::VectorXd v(dim);
  for (int j = 0; j < dim; ++j) {
    const std::uint64_t u = mix64(h + static_cast<std::uint64_t>(j));
    v[j] = static_cast<double>(u >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  return normalized_embedding(v).cast<float>();
}

void SyntheticWorld::add_text(const std::string& text, const std::string& topic, double jitter,
                              std::vector<std::string> extra_tags) {
  TextScript script{topic, std::move(extra_tags), jitter};
  if (std::find(script.tags.begin(), script.tags.end(), topic) == script.tags.end())
    script.tags.insert(script.tags.begin(), topic);
  const auto key = normalize_text(text);
  auto [it, inserted] = texts.emplace(key, script);
  if (!inserted && it->second.topic != topic)
    throw Error("text scripted under two topics: " + text);
}

void SyntheticWorld::add_abstractions(const std::string& before, const std::string& after,
                                      AbstractionScript script) {
  if (script.texts.size() != script.places.size() * script.changes.size())
    throw Error("abstraction script must be places x changes");
  abstractions[normalize_text(change_text(before, after))] = std::move(script);
}

const TextScript* SyntheticWorld::script_for(const std::string& text) const {
  auto it = texts.find(normalize_text(text));
  return it == texts.end() ? nullptr : &it->second;
}

EmbeddingVector<float> SyntheticWorld::text_embedding(const std::string& text) const {
  const TextScript* script = script_for(text);
  if (!script) return hash_embedding(text, dim, seed);
  EmbeddingVector<float> anchor = seeded_unit_vector("topic:" + script->topic, dim, seed);
  if (script->jitter <= 0.0) return anchor;
  const EmbeddingVector<float> wobble =
      seeded_unit_vector("text:" + normalize_text(text), dim, seed);
  const Eigen::VectorXd mixed =
      anchor.cast<double>() + script->jitter * wobble.cast<double>();
  return normalized_embedding(mixed).cast<float>();
}

bool SyntheticWorld::belongs(const std::string& change_text, const std::string& trend_text) const {
  const auto nc = normalize_text(change_text), nt = normalize_text(trend_text);
  if (auto it = memberships.find({nc, nt}); it != memberships.end()) return it->second;
  if (nc == nt) return true;
  const TextScript* sc = script_for(change_text);
  const TextScript* st = script_for(trend_text);
  if (!sc || !st) return false;
  return std::find(sc->tags.begin(), sc->tags.end(), st->topic) != sc->tags.end();
}

std::vector<const PlantedChange*> SyntheticWorld::changes_at(const std::string& after_uri) const {
  if (indexed_count_ != changes.size()) {
    by_uri_.clear();
    for (std::size_t i = 0; i < changes.size(); ++i) by_uri_[changes[i].after_uri].push_back(i);
    indexed_count_ = changes.size();
  }
  std::vector<const PlantedChange*> out;
  if (auto it = by_uri_.find(after_uri); it != by_uri_.end())
    for (std::size_t i : it->second) out.push_back(&changes[i]);
  return out;
}

Json SyntheticWorld::to_json() const {
  Json j;
  j["dim"] = dim;
  j["seed"] = seed;
  j["changes"] = Json::array();
  for (const auto& c : changes) {
    j["changes"].push_back(Json{{"after_uri", c.after_uri},
                                {"before", c.before},
                                {"after", c.after},
                                {"real", c.real},
                                {"detected", c.detected},
                                {"critic_accepts", c.critic_accepts}});
  }
  j["texts"] = Json::array();
  for (const auto& [text, s] : texts)
    j["texts"].push_back(Json{{"text", text}, {"topic", s.topic}, {"tags", s.tags}, {"jitter", s.jitter}});
  j["abstractions"] = Json::array();
  for (const auto& [key, a] : abstractions)
    j["abstractions"].push_back(
        Json{{"change", key}, {"places", a.places}, {"changes", a.changes}, {"texts", a.texts}});
  j["memberships"] = Json::array();
  for (const auto& [key, answer] : memberships)
    j["memberships"].push_back(Json{{"change", key.first}, {"trend", key.second}, {"answer", answer}});
  j["findings"] = Json::array();
  for (const auto& [uri, f] : findings) j["findings"].push_back(Json{{"uri", uri}, {"findings", f}});
  j["image_vectors"] = Json::array();
  for (const auto& [uri, v] : image_vectors)
    j["image_vectors"].push_back(Json{{"uri", uri}, {"vector", v}});
  j["captions"] = Json::array();
  for (const auto& [uri, c] : captions) j["captions"].push_back(Json{{"uri", uri}, {"caption", c}});
  j["failing_uris"] = failing_uris;
  j["failing_texts"] = failing_texts;
  j["unavailable"] = unavailable;
  j["latency_ms"] = latency_ms;
  return j;
}

SyntheticWorld SyntheticWorld::from_json(const Json& j) {
  SyntheticWorld w;
  w.dim = j.value("dim", 64);
  w.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.value("changes", Json::array())) {
    PlantedChange pc;
    pc.after_uri = c.at("after_uri").get<std::string>();
    pc.before = c.at("before").get<std::string>();
    pc.after = c.at("after").get<std::string>();
    pc.real = c.value("real", true);
    pc.detected = c.value("detected", true);
    pc.critic_accepts = c.value("critic_accepts", pc.real);
    w.changes.push_back(std::move(pc));
  }
  for (const auto& t : j.value("texts", Json::array()))
    w.add_text(t.at("text").get<std::string>(), t.at("topic").get<std::string>(),
               t.value("jitter", 0.0), t.value("tags", std::vector<std::string>{}));
  for (const auto& a : j.value("abstractions", Json::array())) {
    AbstractionScript s{a.at("places").get<std::vector<std::string>>(),
                        a.at("changes").get<std::vector<std::string>>(),
                        a.at("texts").get<std::vector<std::string>>()};
    if (s.texts.size() != s.places.size() * s.changes.size())
      throw Error("abstraction script must be places x changes");
    w.abstractions[normalize_text(a.at("change").get<std::string>())] = std::move(s);
  }
  for (const auto& m : j.value("memberships", Json::array()))
    w.memberships[{normalize_text(m.at("change").get<std::string>()),
                   normalize_text(m.at("trend").get<std::string>())}] = m.at("answer").get<bool>();
  for (const auto& f : j.value("findings", Json::array()))
    w.findings[f.at("uri").get<std::string>()] = f.at("findings").get<std::vector<std::string>>();
  for (const auto& v : j.value("image_vectors", Json::array()))
    w.image_vectors[v.at("uri").get<std::string>()] = v.at("vector").get<std::vector<float>>();
  for (const auto& c : j.value("captions", Json::array()))
    w.captions[c.at("uri").get<std::string>()] = c.at("caption").get<std::string>();
  for (const auto& u : j.value("failing_uris", Json::array())) w.failing_uris.insert(u.get<std::string>());
  for (const auto& t : j.value("failing_texts", Json::array()))
    w.failing_texts.insert(normalize_text(t.get<std::string>()));
  w.unavailable = j.value("unavailable", false);
  w.latency_ms = j.value("latency_ms", 0);
  return w;
}

void SyntheticWorld::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump(1) + "\n");
}

SyntheticWorld SyntheticWorld::load(const std::filesystem::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw Error("bad world file " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

SyntheticBackend::SyntheticBackend(SyntheticWorld world) : world_(std::move(world)) {
  world_.changes_at("");  // build the uri index before concurrent use
}

std::size_t SyntheticBackend::calls(RequestKind kind) const {
  return calls_[static_cast<std::size_t>(kind)].load();
}

void SyntheticBackend::maybe_fail(const AnalystRequest& request) const {
  if (world_.unavailable) throw BackendError("synthetic backend unavailable", true);
  for (const auto& uri : request.images)
    if (world_.failing_uris.count(uri)) throw BackendError("scripted failure for " + uri, true);
}

std::string SyntheticBackend::complete(const AnalystRequest& request, const std::string&) {
  ++calls_[static_cast<std::size_t>(request.kind)];
  if (world_.latency_ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(world_.latency_ms));
  maybe_fail(request);
  switch (request.kind) {
    case RequestKind::detect_changes: return answer_detection(request);
    case RequestKind::self_critic: return answer_critic(request);
    case RequestKind::derive_abstractions: return answer_abstractions(request);
    case RequestKind::verify_membership: return answer_membership(request);
    case RequestKind::unusual_things: return answer_unusual(request);
    case RequestKind::caption_image: {
      const auto& uri = request.images.at(0);
      auto it = world_.captions.find(uri);
      return it == world_.captions.end() ? "A street scene." : it->second;
    }
  }
  throw BackendError("unsupported request kind", false);
}

std::string SyntheticBackend::answer_detection(const AnalystRequest& request) const {
  std::string out;
  for (std::size_t i = 1; i < request.images.size(); ++i) {
    for (const PlantedChange* pc : world_.changes_at(request.images[i])) {
      if (!pc->detected) continue;
      out += format_change_line(RawChange{pc->before, pc->after, static_cast<int>(i)}) + "\n";
    }
  }
  return out.empty() ? "No significant changes can be confirmed in these images.\n" : out;
}

std::string SyntheticBackend::answer_critic(const AnalystRequest& request) const {
  const auto& before = request.bindings.at("before");
  const auto& after = request.bindings.at("after");
  bool keep = false;
  if (request.images.size() == 2) {
    for (const PlantedChange* pc : world_.changes_at(request.images[1])) {
      if (normalize_text(pc->before) == normalize_text(before) &&
          normalize_text(pc->after) == normalize_text(after)) {
        keep = pc->critic_accepts;
        break;
      }
    }
  }
  return keep ? "Answer: Y.\nReason: The change is visible in both images.\n"
              : "Answer: N.\nReason: The change cannot be confirmed in the evidence.\n";
}

std::string SyntheticBackend::answer_abstractions(const AnalystRequest& request) const {
  const auto text = change_text(request.bindings.at("before"), request.bindings.at("after"));
  auto it = world_.abstractions.find(normalize_text(text));
  if (it == world_.abstractions.end())
    return format_abstractions({"(as described)"}, {"(as described)"}, {text});
  return format_abstractions(it->second.places, it->second.changes, it->second.texts);
}

std::string SyntheticBackend::answer_membership(const AnalystRequest& request) const {
  const auto text = change_text(request.bindings.at("before"), request.bindings.at("after"));
  return world_.belongs(text, request.bindings.at("trend"))
             ? "Answer: Y.\nReason: The change is a specific case of the group.\n"
             : "Answer: N.\nReason: The change does not match the group.\n";
}

std::string SyntheticBackend::answer_unusual(const AnalystRequest& request) const {
  auto it = world_.findings.find(request.images.at(0));
  if (it == world_.findings.end() || it->second.empty()) return "None\n";
  std::string out;
  for (const auto& f : it->second) out += "Unusual: " + f + "\n";
  return out;
}

EmbeddingVector<float> SyntheticBackend::embed_text(const std::string& text) {
  ++embed_calls_;
  if (world_.unavailable) throw BackendError("synthetic backend unavailable", true);
  if (world_.failing_texts.count(normalize_text(text)))
    throw BackendError("scripted embedding failure", true);
  return world_.text_embedding(text);
}

EmbeddingVector<float> SyntheticBackend::embed_image(const std::string& image_uri) {
  ++embed_calls_;
  if (world_.unavailable) throw BackendError("synthetic backend unavailable", true);
  auto it = world_.image_vectors.find(image_uri);
  if (it == world_.image_vectors.end()) return hash_embedding(image_uri, world_.dim, world_.seed);
  return Eigen::Map<const EmbeddingVector<float>>(it->second.data(),
                                                  static_cast<Eigen::Index>(it->second.size()));
}

// ---------------------------------------------------------------------------
// City generation

namespace {

constexpr std::array<const char*, 16> kSubjects = {
    "storefront",  "overpass support", "bus shelter",   "crosswalk",
    "parking lot", "sidewalk",         "rooftop",       "street lamp",
    "bike rack",   "building facade",  "corner store",  "fire hydrant",
    "traffic signal", "fence",         "tree pit",      "newsstand"};

constexpr std::array<const char*, 12> kThings = {
    "outdoor dining tables", "blue paint",       "a security camera", "red warning pads",
    "a chain-link fence",    "solar panels",     "a bus lane marking", "fresh graffiti",
    "scaffolding",           "a for-lease sign", "new bike racks",     "a painted mural"};

constexpr std::array<const char*, 6> kMotifs = {
    "A large, abstract sculpture", "A vintage car parked on the sidewalk",
    "A giant inflatable rat",      "A piano standing on the street",
    "A boat on a trailer",         "A mannequin in a window seat"};

struct Group {
  std::string topic;
  std::string subject;
  std::string thing;
  std::string suffix;
  std::size_t size = 0;
  bool frequent = false;
};

std::string group_suffix(std::size_t g) {
  const std::size_t combos = kSubjects.size() * kThings.size();
  return g < combos ? "" : " in district " + std::to_string(g / combos);
}

struct LocationSlot {
  double lat = 0.0, lon = 0.0;
  std::vector<std::string> uris;  // chronological
};

}  // namespace

Json SyntheticCity::truth_json() const {
  auto dump = [](const std::vector<PlantedTrend>& list) {
    Json arr = Json::array();
    for (const auto& t : list) {
      Json coords = Json::array();
      for (const auto& [lat, lon] : t.coordinates) coords.push_back(Json::array({lat, lon}));
      arr.push_back(Json{{"topic", t.topic},
                         {"trend_text", t.trend_text},
                         {"frequent", t.frequent},
                         {"after_uris", t.after_uris},
                         {"coordinates", coords}});
    }
    return arr;
  };
  return Json{{"trends", dump(trends)}, {"unusual_trends", dump(unusual_trends)}};
}

SyntheticCity generate_city(const CityRecipe& recipe) {
  if (recipe.images_min < 2 || recipe.images_max < recipe.images_min)
    throw Error("bad image count range in city recipe");
  if (recipe.hallucination_rate < 0.0 || recipe.hallucination_rate >= 1.0)
    throw Error("hallucination rate must be in [0, 1)");
  std::mt19937_64 rng(recipe.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto chance = [&](double p) { return p > 0.0 && uniform(0.0, 1.0) < p; };

  SyntheticCity city;
  SyntheticWorld& world = city.world;
  world.dim = recipe.dim;
  world.seed = recipe.seed;

  std::vector<Group> groups;
  auto add_group = [&](std::string prefix, std::size_t size, bool frequent) {
    const std::size_t g = groups.size();
    groups.push_back(Group{prefix + "-" + std::to_string(g), kSubjects[g % kSubjects.size()],
                           kThings[(g / kSubjects.size() + g) % kThings.size()], group_suffix(g),
                           size, frequent});
  };
  for (auto s : recipe.trend_sizes) add_group("trend", s, true);
  for (auto s : recipe.distractor_sizes) add_group("distractor", s, false);
  for (std::size_t i = 0; i < recipe.singleton_changes; ++i) add_group("single", 1, false);

  std::size_t change_count = 0;
  for (const auto& g : groups) change_count += g.size;

  // One location per change, plus empty ones; shuffled so groups interleave.
  const std::size_t n_locations = change_count + recipe.empty_locations;
  std::vector<std::size_t> slot_of(n_locations);
  std::iota(slot_of.begin(), slot_of.end(), std::size_t{0});
  std::shuffle(slot_of.begin(), slot_of.end(), rng);

  const std::size_t cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(n_locations))));
  const double m_per_deg_lat = kEarthRadiusM * std::numbers::pi / 180.0;
  const double m_per_deg_lon = m_per_deg_lat * std::cos(recipe.origin_lat * std::numbers::pi / 180.0);
  const auto start_day = std::chrono::sys_days{std::chrono::year{recipe.first_year} / 1 / 1};
  const auto end_day = std::chrono::sys_days{std::chrono::year{recipe.last_year} / 12 / 31};
  const long span_days = (end_day - start_day).count();

  std::vector<LocationSlot> slots(n_locations);
  for (std::size_t s = 0; s < n_locations; ++s) {
    auto& slot = slots[s];
    slot.lat = recipe.origin_lat + static_cast<double>(s / cols) * recipe.spacing_m / m_per_deg_lat;
    slot.lon = recipe.origin_lon + static_cast<double>(s % cols) * recipe.spacing_m / m_per_deg_lon;
    const std::size_t n_images = std::uniform_int_distribution<std::size_t>(
        recipe.images_min, recipe.images_max)(rng);
    std::set<long> days;
    while (days.size() < n_images) days.insert(std::uniform_int_distribution<long>(0, span_days)(rng));
    const double heading = uniform(0.0, 360.0);
    std::size_t k = 0;
    for (long day : days) {
      char id[32], uri[64];
      std::snprintf(id, sizeof id, "p%05zu-%02zu", s, k);
      std::snprintf(uri, sizeof uri, "synth://loc%05zu/img%02zu.jpg", s, k);
      CapturePoint p;
      p.id = id;
      p.image_uri = uri;
      p.lat = slot.lat + uniform(-0.25, 0.25) / m_per_deg_lat;
      p.lon = slot.lon + uniform(-0.25, 0.25) / m_per_deg_lon;
      p.heading = heading;
      p.timestamp = std::chrono::time_point_cast<std::chrono::seconds>(
          start_day + std::chrono::days{day} +
          std::chrono::seconds{std::uniform_int_distribution<int>(8 * 3600, 17 * 3600)(rng)});
      slot.uris.push_back(p.image_uri);
      city.points.push_back(std::move(p));
      ++k;
    }
  }

  auto random_pair_uri = [&](const LocationSlot& slot) {
    const auto i = std::uniform_int_distribution<std::size_t>(1, slot.uris.size() - 1)(rng);
    return slot.uris[i];
  };

  std::size_t next_slot = 0;
  std::size_t detected_real = 0;
  for (const auto& g : groups) {
    PlantedTrend truth;
    truth.topic = g.topic;
    truth.frequent = g.frequent;
    truth.trend_text = "A " + g.subject + " gained " + g.thing + g.suffix + ".";
    const std::string general = "A " + g.subject + " got " + g.thing + " installed" + g.suffix + ".";
    world.add_text(truth.trend_text, g.topic, 0.0);
    world.add_text(general, g.topic, 0.0);
    for (std::size_t j = 0; j < g.size; ++j) {
      const auto& slot = slots[slot_of[next_slot++]];
      const std::string site = "site " + g.topic + "." + std::to_string(j);
      PlantedChange pc;
      pc.after_uri = random_pair_uri(slot);
      pc.before = "The " + g.subject + " at " + site + " had no " + g.thing + ".";
      pc.after = "The " + g.subject + " at " + site + " has " + g.thing + " now.";
      pc.real = true;
      pc.detected = !chance(recipe.miss_rate);
      pc.critic_accepts = !chance(recipe.critic_false_reject_rate);
      if (pc.detected) ++detected_real;
      world.add_text(change_text(pc.before, pc.after), g.topic, recipe.jitter);
      const std::string specific = "The " + g.subject + " at " + site + " gained " + g.thing + ".";
      const std::string specific_general =
          "The " + g.subject + " at " + site + " got " + g.thing + " installed.";
      world.add_text(specific, g.topic, recipe.jitter);
      world.add_text(specific_general, g.topic, recipe.jitter);
      world.add_abstractions(
          pc.before, pc.after,
          AbstractionScript{{"The " + g.subject + " at " + site, "A " + g.subject},
                            {"gained " + g.thing, "got " + g.thing + " installed"},
                            {specific, specific_general, truth.trend_text, general}});
      truth.after_uris.push_back(pc.after_uri);
      truth.coordinates.emplace_back(slot.lat, slot.lon);
      world.changes.push_back(std::move(pc));
    }
    city.trends.push_back(std::move(truth));
  }

  const double rate = recipe.hallucination_rate;
  const auto n_halluc = static_cast<std::size_t>(
      std::llround(rate / (1.0 - rate) * static_cast<double>(detected_real)));
  for (std::size_t i = 0; i < n_halluc && n_locations > 0; ++i) {
    const auto& slot = slots[std::uniform_int_distribution<std::size_t>(0, n_locations - 1)(rng)];
    const std::string subject = kSubjects[i % kSubjects.size()];
    const std::string thing = kThings[(i * 7) % kThings.size()];
    PlantedChange pc;
    pc.after_uri = random_pair_uri(slot);
    pc.before = "The " + subject + " at spot h." + std::to_string(i) + " looked plain.";
    pc.after = "The " + subject + " at spot h." + std::to_string(i) + " shows " + thing + ".";
    pc.real = false;
    pc.critic_accepts = chance(recipe.critic_escape_rate);
    world.add_text(change_text(pc.before, pc.after), "halluc-" + std::to_string(i), 0.0);
    world.changes.push_back(std::move(pc));
  }

  // Single-image findings.
  std::vector<std::string> all_uris;
  for (const auto& s : slots) all_uris.insert(all_uris.end(), s.uris.begin(), s.uris.end());
  std::shuffle(all_uris.begin(), all_uris.end(), rng);
  std::map<std::string, std::size_t> slot_by_uri;
  for (std::size_t s = 0; s < slots.size(); ++s)
    for (const auto& u : slots[s].uris) slot_by_uri[u] = s;
  std::size_t next_uri = 0;
  auto take_uri = [&]() -> const std::string& {
    if (next_uri >= all_uris.size()) throw Error("not enough images for unusual findings");
    return all_uris[next_uri++];
  };
  auto plant_finding_group = [&](std::size_t u, std::size_t size, bool frequent) {
    PlantedTrend truth;
    truth.topic = "unusual-" + std::to_string(u);
    const std::string motif = std::string(kMotifs[u % kMotifs.size()]) +
                              (u < kMotifs.size() ? "" : " (kind " + std::to_string(u) + ")");
    truth.trend_text = motif + ".";
    truth.frequent = frequent;
    world.add_text(truth.trend_text, truth.topic, 0.0);
    for (std::size_t j = 0; j < size; ++j) {
      const std::string& uri = take_uri();
      const std::string finding = motif + " at plaza " + std::to_string(u) + "." + std::to_string(j) + ".";
      world.findings[uri].push_back(finding);
      world.add_text(finding, truth.topic, recipe.jitter);
      world.add_abstractions("", finding,
                             AbstractionScript{{"plaza " + std::to_string(u) + "." + std::to_string(j),
                                                "anywhere"},
                                               {motif},
                                               {finding, truth.trend_text}});
      truth.after_uris.push_back(uri);
      const auto& slot = slots[slot_by_uri.at(uri)];
      truth.coordinates.emplace_back(slot.lat, slot.lon);
    }
    city.unusual_trends.push_back(std::move(truth));
  };
  std::size_t u = 0;
  for (auto size : recipe.unusual_trend_sizes) plant_finding_group(u++, size, true);
  for (std::size_t i = 0; i < recipe.unusual_singletons; ++i) plant_finding_group(u++, 1, false);

  return city;
}

}  // namespace trendscope
