#pragma once

#include <memory>
#include <string>

#include "trendscope/gateway.hpp"

namespace httplib {
class Client;
}

namespace trendscope {

/// JSON-over-HTTP analyst service.
///
///   POST /v1/analyze  {"model", "kind", "prompt", "images": [uri...]}  -> {"text": "..."}
///   POST /v1/embed    {"model", "input": "..."}                        -> {"embedding": [...]}
///   POST /v1/embed    {"model", "image": "uri"}                        -> {"embedding": [...]}
///
/// A bearer token is read from the environment variable named in the
/// config. 408/429/5xx and transport errors are transient; other non-200
/// statuses are permanent.
class RemoteBackend : public AnalystBackend {
 public:
  explicit RemoteBackend(const BackendConfig& config);
  ~RemoteBackend() override;

  std::string complete(const AnalystRequest& request, const std::string& prompt) override;
  EmbeddingVector<float> embed_text(const std::string& text) override;
  EmbeddingVector<float> embed_image(const std::string& image_uri) override;

 private:
  Json post(const std::string& path, const Json& body);
  EmbeddingVector<float> parse_embedding(const Json& reply);

  BackendConfig config_;
  std::string token_;
};

}  // namespace trendscope
