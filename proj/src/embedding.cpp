#include "poda/embedding.hpp"

#include <cctype>
#include <cstring>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/serialization.hpp"
#include "poda/util.hpp"

namespace poda::tpcl {
namespace {

std::uint64_t seed_of(std::string_view text) {
  const std::string hex = util::sha256_hex(text);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

void add_gaussian(std::vector<double>& acc, std::uint64_t seed, double weight) {
  GaussianSource g(seed);
  for (auto& x : acc) x += weight * g.next();
}

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) & 0x80)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim < 2) fail(ErrorCode::InvalidArgument, "embedding dimension must be >= 2");
}

std::vector<ThoughtVector> HashEmbeddingProvider::embed(std::span<const std::string> texts) {
  std::vector<ThoughtVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (util::trim(text).empty()) fail(ErrorCode::InvalidArgument, "cannot embed empty text");
    ThoughtVector v;
    v.values.assign(dim_, 0.0);
    for (const auto& tok : tokens(text)) add_gaussian(v.values, seed_of(tok), 1.0);
    add_gaussian(v.values, seed_of("text:" + text), 0.25);
    out.push_back(std::move(v));
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string endpoint, std::string model, std::size_t dim,
                                                 llm::BackendConfig cfg, llm::HttpPost transport)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      dim_(dim),
      cfg_(std::move(cfg)),
      transport_(transport ? std::move(transport) : llm::make_http_transport(cfg_.timeout)) {
  if (endpoint_.empty()) fail(ErrorCode::ConfigError, "embedding endpoint is empty");
  if (dim_ < 2) fail(ErrorCode::ConfigError, "embedding dimension must be >= 2");
}

std::vector<ThoughtVector> RemoteEmbeddingProvider::embed(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (util::trim(t).empty()) fail(ErrorCode::InvalidArgument, "cannot embed empty text");
  }
  if (texts.empty()) return {};
  Json body;
  body["model"] = model_;
  body["input"] = Json::array();
  for (const auto& t : texts) body["input"].push_back(t);
  const auto bearer = llm::bearer_from_env(cfg_.auth_env);
  const auto res = llm::post_with_retries(transport_, endpoint_, bearer, dump_line(body), cfg_.max_retries, cfg_.backoff);
  std::vector<ThoughtVector> out(texts.size());
  try {
    const Json j = Json::parse(res.body);
    for (const auto& item : j.at("data")) {
      const auto idx = item.at("index").get<std::size_t>();
      if (idx >= out.size()) fail(ErrorCode::BackendError, "embedding index out of range");
      out[idx].values = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::BackendError, fmt::format("malformed embeddings response: {}", e.what()));
  }
  for (auto& v : out) {
    if (v.dim() != dim_) fail(ErrorCode::BackendError, fmt::format("embedding has dimension {}, expected {}", v.dim(), dim_));
  }
  return out;
}

std::vector<ThoughtVector> embed_paths(EmbeddingProvider& provider, const rationale::Rationale& r) {
  std::vector<std::string> texts;
  for (const auto& p : r.paths) texts.push_back(p.reasoning);
  return provider.embed(texts);
}

}  // namespace poda::tpcl
