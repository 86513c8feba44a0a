#include "trendscope/embedding.hpp"

#include <cctype>

namespace trendscope {

EmbeddingVector<float> hash_embedding(std::string_view text, int dim, std::uint64_t seed) {
  if (dim <= 0) throw Error("embedding dimension must be positive");
  if (trim(text).empty()) throw Error("cannot embed empty text");
  std::vector<std::string> tokens;
  for (auto& word : split_words(normalize_text(text))) {
    std::string tok;
    for (unsigned char c : word)
      if (std::isalnum(c) || c >= 0x80) tok.push_back(static_cast<char>(c));
    if (!tok.empty()) tokens.push_back(std::move(tok));
  }
  if (tokens.empty()) tokens.push_back(normalize_text(text));

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  for (const auto& tok : tokens) {
    const std::uint64_t h = fnv1a64(tok) ^ seed;
    for (int j = 0; j < dim; ++j) {
      const std::uint64_t u = mix64(h + static_cast<std::uint64_t>(j));
      acc[j] += static_cast<double>(u >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
  }
  if (!(acc.norm() > 0.0)) acc[0] = 1.0;
  return normalized_embedding(acc).cast<float>();
}

}  // namespace trendscope
