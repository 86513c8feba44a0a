#include "trendscope/gateway.hpp"

#include <array>
#include <thread>

#include "trendscope/remote_backend.hpp"
#include "trendscope/synthetic.hpp"

namespace trendscope {

std::string AnalystRequest::id() const {
  std::string key(to_string(kind));
  for (const auto& [k, v] : bindings) {
    key += '\x1e';
    key += k;
    key += '\x1f';
    key += v;
  }
  for (const auto& uri : images) {
    key += '\x1d';
    key += uri;
  }
  return hex64(fnv1a64(key));
}

void PoisonStore::record(Entry entry) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    append_jsonl(path_, Json{{"request_id", entry.request_id},
                             {"kind", entry.kind},
                             {"attempts", entry.attempts},
                             {"last_error", entry.last_error}});
  }
  entries_.push_back(std::move(entry));
}

std::vector<PoisonStore::Entry> PoisonStore::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t PoisonStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

InFlightLimiter::InFlightLimiter(std::size_t limit) : limit_(limit) {
  if (limit == 0) throw Error("max_in_flight must be at least 1");
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return current_ < limit_; });
  ++current_;
  peak_ = std::max(peak_, current_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --current_;
  }
  cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::size_t InFlightLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return current_;
}

std::string describe_images(const std::vector<SequenceImage>& images, int first_number) {
  static constexpr std::array<const char*, 12> kMonths = {
      "January", "February", "March",     "April",   "May",      "June",
      "July",    "August",   "September", "October", "November", "December"};
  std::string out;
  int number = first_number;
  for (const auto& im : images) {
    const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(im.timestamp)};
    out += "This is image No. " + std::to_string(number++) + ", taken in " +
           kMonths[unsigned(ymd.month()) - 1] + " " + std::to_string(int(ymd.year())) + ".\n";
  }
  return out;
}

AnalystGateway::AnalystGateway(std::shared_ptr<AnalystBackend> backend, PromptLibrary prompts,
                               GatewayOptions options)
    : backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      options_(std::move(options)),
      limiter_(options_.max_in_flight),
      poison_(options_.poison_path) {
  if (!backend_) throw Error("gateway needs a backend");
  if (options_.retry.max_attempts < 1) throw Error("retry policy needs at least one attempt");
}

template <typename T>
std::optional<T> AnalystGateway::with_retry(const std::string& request_id, const std::string& kind,
                                            const std::function<T()>& call) {
  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  int attempt = 1;
  for (;; ++attempt) {
    bool transient = true;
    try {
      InFlightLimiter::Slot slot(limiter_);
      ++stats_.calls;
      return call();
    } catch (const BackendError& e) {
      last_error = e.what();
      transient = e.transient();
    } catch (const std::exception& e) {
      last_error = e.what();
    }
    if (!transient || attempt >= options_.retry.max_attempts) break;
    ++stats_.retries;
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(backoff.count()) * options_.retry.multiplier));
  }
  ++stats_.poisoned;
  poison_.record({request_id, kind, attempt, last_error});
  return std::nullopt;
}

std::optional<std::string> AnalystGateway::complete(const AnalystRequest& request) {
  const std::string prompt = prompts_.render(request.kind, request.bindings);
  return with_retry<std::string>(request.id(), std::string(to_string(request.kind)),
                                 [&] { return backend_->complete(request, prompt); });
}

std::optional<DetectionResult> AnalystGateway::detect_changes(const ImageSequence& sequence) {
  if (sequence.images.empty()) throw Error("cannot analyze an empty sequence");
  AnalystRequest req{RequestKind::detect_changes,
                     {{"image_list", describe_images(sequence.images)}, {"role", options_.role}},
                     {}};
  for (const auto& im : sequence.images) req.images.push_back(im.image_uri);
  auto answer = complete(req);
  if (!answer) return std::nullopt;

  DetectionResult result;
  auto parsed = parse_detection_response(*answer);
  for (const auto& [lineno, err] : parsed.errors) {
    ++stats_.parse_errors;
    result.diagnostics.push_back(sequence.location_id + " line " + std::to_string(lineno) + ": " +
                                 std::string(to_string(err.defect)) + ": " + err.message);
  }
  const int max_index = static_cast<int>(sequence.images.size()) - 1;
  for (auto& change : parsed.changes) {
    if (change.after_index < 1 || change.after_index > max_index) {
      ++stats_.parse_errors;
      result.diagnostics.push_back(sequence.location_id + ": image index " +
                                   std::to_string(change.after_index) +
                                   " outside the sequence (1.." + std::to_string(max_index) + ")");
      continue;
    }
    result.changes.push_back(std::move(change));
  }
  return result;
}

bool AnalystGateway::self_critic(const RawChange& change, const SequenceImage& before,
                                 const SequenceImage& after) {
  AnalystRequest req{RequestKind::self_critic,
                     {{"image_list", describe_images({before, after}, change.after_index)},
                      {"after_index", std::to_string(change.after_index)},
                      {"next_index", std::to_string(change.after_index + 1)},
                      {"before", change.before_desc},
                      {"after", change.after_desc},
                      {"role", options_.role}},
                     {before.image_uri, after.image_uri}};
  auto answer = complete(req);
  if (!answer) {
    ++stats_.critic_failures;
    return false;
  }
  auto verdict = parse_yes_no(*answer);
  if (!verdict) {
    ++stats_.critic_failures;
    return false;
  }
  return *verdict;
}

std::vector<std::string> AnalystGateway::derive_abstractions(const ChangeRecord& change) {
  if (trim(change.after_desc).empty()) throw Error("change has no description: " + change.id);
  AnalystRequest req{RequestKind::derive_abstractions,
                     {{"before", change.before_desc}, {"after", change.after_desc}},
                     {}};
  auto answer = complete(req);
  if (!answer) return {};
  auto parsed = parse_abstractions(*answer);
  if (auto* ok = std::get_if<AbstractionParse>(&parsed)) return std::move(ok->texts);
  ++stats_.abstraction_unparsed;
  return {};
}

Verdict AnalystGateway::verify_membership_verdict(const ChangeRecord& change,
                                                  const std::string& trend_text) {
  if (trim(change.after_desc).empty() || trim(trend_text).empty())
    throw Error("membership query needs non-empty change and trend texts");
  AnalystRequest req{RequestKind::verify_membership,
                     {{"before", change.before_desc},
                      {"after", change.after_desc},
                      {"trend", trend_text}},
                     {}};
  auto answer = complete(req);
  if (!answer) {
    ++stats_.membership_failures;
    return Verdict::failed;
  }
  auto verdict = parse_yes_no(*answer);
  if (!verdict) {
    ++stats_.membership_unparsed;
    return Verdict::failed;
  }
  return *verdict ? Verdict::yes : Verdict::no;
}

std::optional<std::vector<std::string>> AnalystGateway::unusual_things(const std::string& image_uri,
                                                                       Timestamp taken) {
  AnalystRequest req{RequestKind::unusual_things,
                     {{"image_list", describe_images({SequenceImage{"", image_uri, taken, 0.0}})},
                      {"role", options_.role}},
                     {image_uri}};
  auto answer = complete(req);
  if (!answer) return std::nullopt;
  return parse_findings(*answer);
}

std::optional<std::string> AnalystGateway::caption_image(const std::string& image_uri) {
  AnalystRequest req{RequestKind::caption_image,
                     {{"image_list", "This is image No. 1.\n"}, {"role", options_.role}},
                     {image_uri}};
  auto answer = complete(req);
  if (!answer) return std::nullopt;
  return trim(*answer);
}

EmbeddingVector<float> AnalystGateway::embed_text(const std::string& text) {
  if (trim(text).empty()) throw Error("cannot embed empty text");
  const std::string id = hex64(fnv1a64("embed_text\x1f" + text));
  auto v = with_retry<EmbeddingVector<float>>(id, "embed_text",
                                              [&] { return backend_->embed_text(text); });
  if (!v) throw PoisonedRequest("text embedding failed after retries: " + text);
  return normalized_embedding(*v);
}

EmbeddingVector<float> AnalystGateway::embed_image(const std::string& image_uri) {
  const std::string id = hex64(fnv1a64("embed_image\x1f" + image_uri));
  auto v = with_retry<EmbeddingVector<float>>(id, "embed_image",
                                              [&] { return backend_->embed_image(image_uri); });
  if (!v) throw PoisonedRequest("image embedding failed after retries: " + image_uri);
  return normalized_embedding(*v);
}

BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  for (const char* secret : {"api_key", "apikey", "token", "secret", "password", "auth"}) {
    if (j.contains(secret))
      throw Error(std::string("inline secret '") + secret +
                  "' in backend config; name an environment variable via auth_env instead");
  }
  BackendConfig c;
  c.kind = j.value("kind", c.kind);
  if (c.kind != "remote" && c.kind != "synthetic") throw Error("unknown backend kind: " + c.kind);
  c.endpoint = j.value("endpoint", "");
  c.model = j.value("model", "");
  c.embedding_model = j.value("embedding_model", c.model);
  c.auth_env = j.value("auth_env", "");
  if (j.contains("world")) {
    std::filesystem::path w = j["world"].get<std::string>();
    c.world = w.is_relative() && !base_dir.empty() ? base_dir / w : w;
  }
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  if (c.max_in_flight == 0) throw Error("max_in_flight must be at least 1");
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
    c.retry.initial_backoff =
        std::chrono::milliseconds(r.value("initial_backoff_ms", c.retry.initial_backoff.count()));
    c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
  }
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
  if (c.kind == "remote" && c.endpoint.empty()) throw Error("remote backend needs an endpoint");
  if (c.kind == "synthetic" && c.world.empty()) throw Error("synthetic backend needs a world file");
  return c;
}

BackendConfig load_backend_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error("bad backend config " + path.string() + ": " + e.what());
  }
  return backend_config_from_json(j, path.parent_path());
}

std::shared_ptr<AnalystBackend> make_backend(const BackendConfig& config) {
  if (config.kind == "remote") return std::make_shared<RemoteBackend>(config);
  return std::make_shared<SyntheticBackend>(SyntheticWorld::load(config.world));
}

}  // namespace trendscope
