#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "trendscope/corpus.hpp"
#include "trendscope/embedding.hpp"
#include "trendscope/parsing.hpp"
#include "trendscope/prompts.hpp"
#include "trendscope/records.hpp"

namespace trendscope {

struct AnalystRequest {
  RequestKind kind = RequestKind::detect_changes;
  Bindings bindings;
  std::vector<std::string> images;

  /// Content hash; identical requests share an id across runs.
  std::string id() const;
};

/// Raised by backends. Transient failures (timeouts, quota, 5xx) are retried;
/// permanent ones go straight to the poison store.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

/// A vision-language analyst plus text/image embedding model.
class AnalystBackend {
 public:
  virtual ~AnalystBackend() = default;

  /// Raw text answer to a rendered prompt with ordered image attachments.
  virtual std::string complete(const AnalystRequest& request, const std::string& prompt) = 0;
  virtual EmbeddingVector<float> embed_text(const std::string& text) = 0;
  virtual EmbeddingVector<float> embed_image(const std::string& image_uri) {
    throw BackendError("backend has no image embedding model (" + image_uri + ")", false);
  }
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Newline-delimited log of requests that exhausted their retries.
class PoisonStore {
 public:
  struct Entry {
    std::string request_id;
    std::string kind;
    int attempts = 0;
    std::string last_error;
  };

  PoisonStore() = default;
  explicit PoisonStore(std::filesystem::path path) : path_(std::move(path)) {}

  void record(Entry entry);
  std::vector<Entry> entries() const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

/// Counting limiter over in-flight backend calls; remembers its peak.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit);

  class Slot {
   public:
    explicit Slot(InFlightLimiter& owner) : owner_(owner) { owner_.acquire(); }
    ~Slot() { owner_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    InFlightLimiter& owner_;
  };

  std::size_t limit() const { return limit_; }
  std::size_t peak() const;
  std::size_t in_flight() const;

 private:
  void acquire();
  void release();

  std::size_t limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

struct GatewayStats {
  std::atomic<std::size_t> calls{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<std::size_t> poisoned{0};
  std::atomic<std::size_t> parse_errors{0};
  std::atomic<std::size_t> critic_failures{0};
  std::atomic<std::size_t> membership_failures{0};
  std::atomic<std::size_t> membership_unparsed{0};
  std::atomic<std::size_t> abstraction_unparsed{0};
};

struct GatewayOptions {
  std::size_t max_in_flight = 64;
  RetryPolicy retry;
  std::filesystem::path poison_path;  // empty: keep poison records in memory only
  std::string role = "analyst";
};

enum class Verdict { yes, no, failed };

struct DetectionResult {
  std::vector<RawChange> changes;
  std::vector<std::string> diagnostics;  // per-line parse and grounding errors
};

/// Thrown by embed calls once retries are exhausted.
class PoisonedRequest : public Error {
 public:
  using Error::Error;
};

/// Uniform front for every analyst query. Safe for concurrent use; one
/// limiter bounds in-flight calls across all threads.
class AnalystGateway {
 public:
  AnalystGateway(std::shared_ptr<AnalystBackend> backend, PromptLibrary prompts,
                 GatewayOptions options = {});

  /// nullopt when the sequence was poisoned.
  std::optional<DetectionResult> detect_changes(const ImageSequence& sequence);

  /// One round of critique over the two evidence images. Backend failure
  /// or an unreadable answer counts as "discard".
  bool self_critic(const RawChange& change, const SequenceImage& before,
                   const SequenceImage& after);

  /// Abstraction texts in (place, change) order, or empty on failure.
  std::vector<std::string> derive_abstractions(const ChangeRecord& change);

  Verdict verify_membership_verdict(const ChangeRecord& change, const std::string& trend_text);
  bool verify_membership(const ChangeRecord& change, const std::string& trend_text) {
    return verify_membership_verdict(change, trend_text) == Verdict::yes;
  }

  /// Findings for one image; nullopt when poisoned.
  std::optional<std::vector<std::string>> unusual_things(const std::string& image_uri,
                                                         Timestamp taken);
  std::optional<std::string> caption_image(const std::string& image_uri);

  /// Unit-normalized; throws PoisonedRequest after retries, Error on empty text.
  EmbeddingVector<float> embed_text(const std::string& text);
  EmbeddingVector<float> embed_image(const std::string& image_uri);

  const GatewayStats& stats() const { return stats_; }
  const PoisonStore& poison() const { return poison_; }
  const InFlightLimiter& limiter() const { return limiter_; }
  std::size_t max_in_flight() const { return limiter_.limit(); }
  const PromptLibrary& prompts() const { return prompts_; }

 private:
  /// Runs `call` under the limiter with retries; nullopt once poisoned.
  template <typename T>
  std::optional<T> with_retry(const std::string& request_id, const std::string& kind,
                              const std::function<T()>& call);

  std::optional<std::string> complete(const AnalystRequest& request);

  std::shared_ptr<AnalystBackend> backend_;
  PromptLibrary prompts_;
  GatewayOptions options_;
  InFlightLimiter limiter_;
  PoisonStore poison_;
  GatewayStats stats_;
  std::mutex diag_mu_;
};

/// "This is image No. i, taken in <Month YYYY>." lines for prompt bindings.
std::string describe_images(const std::vector<SequenceImage>& images, int first_number = 1);

struct BackendConfig {
  std::string kind = "synthetic";  // remote | synthetic
  std::string endpoint;
  std::string model;
  std::string embedding_model;
  std::string auth_env;  // name of the environment variable holding the token
  std::filesystem::path world;  // synthetic world script
  std::size_t max_in_flight = 64;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
};

/// Reads the JSON backend config. Inline secrets are rejected.
BackendConfig load_backend_config(const std::filesystem::path& path);
BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

std::shared_ptr<AnalystBackend> make_backend(const BackendConfig& config);

}  // namespace trendscope
