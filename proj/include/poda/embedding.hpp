#pragma once

// Turns thought-path text into vectors for the contrastive objective.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poda/llm_client.hpp"
#include "poda/rationale.hpp"
#include "poda/tpcl.hpp"

namespace poda::tpcl {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  // One vector per text. Errors: InvalidArgument on empty text, backend
  // errors from remote providers.
  virtual std::vector<ThoughtVector> embed(std::span<const std::string> texts) = 0;
};

// Offline provider: sum of per-token Gaussian vectors seeded by SHA-256 of
// the lowercased token, plus a smaller whole-text component so distinct
// texts never collide.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 64);
  std::size_t dim() const override { return dim_; }
  std::vector<ThoughtVector> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
};

// OpenAI-compatible /embeddings endpoint.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::string endpoint, std::string model, std::size_t dim, llm::BackendConfig cfg,
                          llm::HttpPost transport = {});
  std::size_t dim() const override { return dim_; }
  std::vector<ThoughtVector> embed(std::span<const std::string> texts) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::size_t dim_;
  llm::BackendConfig cfg_;
  llm::HttpPost transport_;
};

// Vectors for every thought-path of a rationale, in option order.
std::vector<ThoughtVector> embed_paths(EmbeddingProvider& provider, const rationale::Rationale& r);

}  // namespace poda::tpcl
