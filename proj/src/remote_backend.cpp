#include "trendscope/remote_backend.hpp"

#include <cstdlib>

#include <httplib.h>

namespace trendscope {

RemoteBackend::RemoteBackend(const BackendConfig& config) : config_(config) {
  if (!config_.auth_env.empty()) {
    const char* value = std::getenv(config_.auth_env.c_str());
    if (!value || !*value)
      throw Error("environment variable " + config_.auth_env + " is not set");
    token_ = value;
  }
}

RemoteBackend::~RemoteBackend() = default;

Json RemoteBackend::post(const std::string& path, const Json& body) {
  // httplib clients are not thread-safe; one per call keeps the backend
  // shareable across gateway workers.
  httplib::Client client(config_.endpoint);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw BackendError("transport error: " + httplib::to_string(res.error()), true);
  if (res->status != 200) {
    const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + path, transient);
  }
  try {
    return Json::parse(res->body);
  } catch (const Json::exception& e) {
    throw BackendError(std::string("malformed reply: ") + e.what(), true);
  }
}

std::string RemoteBackend::complete(const AnalystRequest& request, const std::string& prompt) {
  const Json reply = post("/v1/analyze", Json{{"model", config_.model},
                                              {"kind", std::string(to_string(request.kind))},
                                              {"prompt", prompt},
                                              {"images", request.images}});
  if (!reply.contains("text") || !reply["text"].is_string())
    throw BackendError("reply has no text field", true);
  return reply["text"].get<std::string>();
}

EmbeddingVector<float> RemoteBackend::parse_embedding(const Json& reply) {
  if (!reply.contains("embedding") || !reply["embedding"].is_array() || reply["embedding"].empty())
    throw BackendError("reply has no embedding", true);
  const auto values = reply["embedding"].get<std::vector<float>>();
  return Eigen::Map<const EmbeddingVector<float>>(values.data(),
                                                  static_cast<Eigen::Index>(values.size()));
}

EmbeddingVector<float> RemoteBackend::embed_text(const std::string& text) {
  return parse_embedding(post("/v1/embed", Json{{"model", config_.embedding_model}, {"input", text}}));
}

EmbeddingVector<float> RemoteBackend::embed_image(const std::string& image_uri) {
  return parse_embedding(
      post("/v1/embed", Json{{"model", config_.embedding_model}, {"image", image_uri}}));
}

}  // namespace trendscope
