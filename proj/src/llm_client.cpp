#include "poda/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "poda/error.hpp"
#include "poda/serialization.hpp"
#include "poda/util.hpp"

namespace poda::llm {
namespace {

Json request_to_json(const ChatRequest& req) {
  Json j;
  j["model_id"] = req.model_id;
  j["messages"] = Json::array();
  for (const auto& m : req.messages) j["messages"].push_back({{"role", role_name(m.role)}, {"text", m.text}});
  j["temperature"] = req.temperature;
  j["top_p"] = req.top_p;
  j["max_tokens"] = req.max_tokens;
  j["seed_tag"] = req.seed_tag ? Json(*req.seed_tag) : Json(nullptr);
  return j;
}

ChatRequest request_from_json(const Json& j) {
  ChatRequest req;
  req.model_id = j.at("model_id").get<std::string>();
  for (const auto& m : j.at("messages")) {
    req.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
  }
  req.temperature = j.at("temperature").get<double>();
  req.top_p = j.at("top_p").get<double>();
  req.max_tokens = j.value("max_tokens", kDefaultMaxTokens);
  if (j.contains("seed_tag") && !j.at("seed_tag").is_null()) req.seed_tag = j.at("seed_tag").get<std::string>();
  return req;
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::ConfigError, "endpoint must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

std::string_view role_name(Role r) noexcept {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown role \"{}\"", name));
}

void validate(const ChatRequest& req) {
  if (req.messages.empty()) fail(ErrorCode::InvalidArgument, "chat request has no messages");
  if (req.messages.back().role != Role::User) fail(ErrorCode::InvalidArgument, "last message must come from the user");
  if (!(req.temperature >= 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (!(req.top_p > 0.0 && req.top_p <= 1.0)) fail(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
  if (req.max_tokens < 1) fail(ErrorCode::InvalidArgument, "max_tokens must be positive");
}

std::string request_digest(const ChatRequest& req) {
  Json key;
  key["model_id"] = req.model_id;
  key["messages"] = Json::array();
  for (const auto& m : req.messages) key["messages"].push_back({{"role", role_name(m.role)}, {"text", m.text}});
  key["temperature"] = req.temperature;
  key["top_p"] = req.top_p;
  key["seed_tag"] = req.seed_tag ? Json(*req.seed_tag) : Json(nullptr);
  return util::sha256_hex(dump_line(key));
}

std::chrono::milliseconds Backoff::delay(int retry) const {
  double ms = static_cast<double>(base_ms) * std::pow(factor, retry);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::min(ms, static_cast<double>(cap_ms))));
}

void validate(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::Remote && cfg.endpoint.empty()) fail(ErrorCode::ConfigError, "remote backend requires an endpoint");
  if (cfg.kind == BackendKind::Replay && cfg.transcript_path.empty()) {
    fail(ErrorCode::ConfigError, "replay backend requires a transcript path");
  }
  if (cfg.max_retries < 0) fail(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (cfg.max_concurrency < 1) fail(ErrorCode::ConfigError, "max_concurrency must be positive");
  if (cfg.requests_per_minute && *cfg.requests_per_minute < 1) fail(ErrorCode::ConfigError, "requests_per_minute must be positive");
  if (cfg.backoff.base_ms < 0 || cfg.backoff.factor < 1.0 || cfg.backoff.cap_ms < 0) {
    fail(ErrorCode::ConfigError, "backoff must have base >= 0, factor >= 1, cap >= 0");
  }
}

std::string encode_transcript_entry(const TranscriptEntry& e) {
  Json j;
  j["digest"] = e.digest;
  j["request"] = request_to_json(e.request);
  Json resp;
  resp["text"] = e.response.text;
  resp["model_id"] = e.response.model_id;
  resp["usage"] = {{"prompt_tokens", e.response.usage.prompt_tokens},
                   {"completion_tokens", e.response.usage.completion_tokens}};
  resp["latency_ms"] = e.response.latency_ms;
  if (e.response.warning) resp["warning"] = *e.response.warning;
  j["response"] = std::move(resp);
  j["timestamp"] = e.timestamp;
  return dump_line(j);
}

TranscriptEntry decode_transcript_entry(std::string_view line) {
  try {
    Json j = Json::parse(line);
    TranscriptEntry e;
    e.request = request_from_json(j.at("request"));
    e.digest = j.value("digest", std::string{});
    if (e.digest.empty()) e.digest = request_digest(e.request);
    e.timestamp = j.value("timestamp", std::string{});
    const Json& r = j.at("response");
    e.response.text = r.at("text").get<std::string>();
    e.response.model_id = r.value("model_id", e.request.model_id);
    if (r.contains("usage")) {
      e.response.usage.prompt_tokens = r["usage"].value("prompt_tokens", 0);
      e.response.usage.completion_tokens = r["usage"].value("completion_tokens", 0);
    }
    e.response.latency_ms = r.value("latency_ms", std::int64_t{0});
    if (r.contains("warning")) e.response.warning = r.at("warning").get<std::string>();
    e.response.timestamp = e.timestamp;
    return e;
  } catch (const Json::exception& ex) {
    fail(ErrorCode::MalformedRecord, std::string("bad transcript line: ") + ex.what());
  }
}

std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> out;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    if (util::trim(line).empty()) continue;
    out.push_back(decode_transcript_entry(line));
  }
  return out;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript) : ReplayBackend(load_transcript(transcript)) {}

ReplayBackend::ReplayBackend(std::vector<TranscriptEntry> entries) {
  for (auto& e : entries) responses_.try_emplace(e.digest, std::move(e.response));
}

ChatResponse ReplayBackend::complete(const ChatRequest& req) {
  validate(req);
  const std::string digest = request_digest(req);
  {
    std::lock_guard lock(mu_);
    ++counts_[digest];
  }
  auto it = responses_.find(digest);
  if (it == responses_.end()) {
    fail(ErrorCode::ReplayMiss, fmt::format("no transcript entry for digest {} (model {})", digest, req.model_id));
  }
  return it->second;
}

std::size_t ReplayBackend::calls() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, c] : counts_) n += static_cast<std::size_t>(c);
  return n;
}

std::map<std::string, int> ReplayBackend::call_counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<CompletionBackend> inner, std::filesystem::path transcript)
    : inner_(std::move(inner)), path_(std::move(transcript)) {
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
}

ChatResponse RecordingBackend::complete(const ChatRequest& req) {
  ChatResponse resp = inner_->complete(req);
  if (resp.timestamp.empty()) resp.timestamp = util::utc_timestamp_now();
  TranscriptEntry e{request_digest(req), req, resp, resp.timestamp};
  std::string line = encode_transcript_entry(e);
  line += '\n';
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) fail(ErrorCode::UnreadablePath, "cannot append to transcript " + path_.string());
  out << line;
  out.flush();
  return resp;
}

ThrottledBackend::ThrottledBackend(std::shared_ptr<CompletionBackend> inner, int max_concurrency,
                                   std::optional<int> requests_per_minute, std::shared_ptr<Clock> clock)
    : inner_(std::move(inner)), gate_(max_concurrency) {
  if (requests_per_minute) limiter_.emplace(*requests_per_minute, std::chrono::minutes(1), std::move(clock));
}

ChatResponse ThrottledBackend::complete(const ChatRequest& req) {
  ConcurrencyGate::Lease lease(gate_);
  if (limiter_) limiter_->acquire();
  return inner_->complete(req);
}

HttpPost make_http_transport(std::chrono::milliseconds timeout) {
  return [timeout](const std::string& url, const std::string& bearer, const std::string& body) {
    SplitUrl parts = split_url(url);
    httplib::Client client(parts.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
    auto res = client.Post(parts.path, headers, body, "application/json");
    HttpResult out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      try {
        out.retry_after = std::chrono::seconds(std::stoi(res->get_header_value("Retry-After")));
      } catch (const std::exception&) {
      }
    }
    return out;
  };
}

RetryOutcome post_with_retries(const HttpPost& transport, const std::string& url, const std::string& bearer,
                               const std::string& body, int max_retries, const Backoff& backoff,
                               const std::function<void(std::chrono::milliseconds)>& sleep) {
  for (int attempt = 0;; ++attempt) {
    HttpResult res = transport(url, bearer, body);
    if (res.status >= 200 && res.status < 300) return {std::move(res.body), attempt};
    std::string what = res.status == 0 ? "connection failed: " + res.error
                                       : fmt::format("HTTP {}: {}", res.status, res.body.substr(0, 300));
    if (!is_retryable(res.status)) fail(ErrorCode::BackendError, what);
    if (attempt >= max_retries) {
      fail(res.status == 429 ? ErrorCode::RateLimited : ErrorCode::BackendUnreachable,
           fmt::format("{} (gave up after {} retries)", what, attempt));
    }
    auto wait = backoff.delay(attempt);
    if (res.retry_after) wait = std::min(std::max(wait, *res.retry_after), std::chrono::milliseconds(backoff.cap_ms));
    spdlog::warn("request to {} failed ({}); retry {}/{} in {} ms", url, what, attempt + 1, max_retries, wait.count());
    if (sleep) {
      sleep(wait);
    } else {
      std::this_thread::sleep_for(wait);
    }
  }
}

std::string bearer_from_env(const std::string& var) {
  const char* v = std::getenv(var.c_str());
  if (!v || !*v) fail(ErrorCode::AuthMissing, fmt::format("environment variable {} is not set", var));
  return v;
}

RemoteBackend::RemoteBackend(BackendConfig cfg, HttpPost transport) : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  if (cfg_.kind != BackendKind::Remote) fail(ErrorCode::ConfigError, "RemoteBackend requires a Remote config");
  validate(cfg_);
  if (!transport_) transport_ = make_http_transport(cfg_.timeout);
}

std::string RemoteBackend::encode_body(const ChatRequest& req) {
  Json j;
  j["model"] = req.model_id;
  j["messages"] = Json::array();
  for (const auto& m : req.messages) j["messages"].push_back({{"role", role_name(m.role)}, {"content", m.text}});
  j["temperature"] = req.temperature;
  j["top_p"] = req.top_p;
  j["max_tokens"] = req.max_tokens;
  return dump_line(j);
}

ChatResponse RemoteBackend::decode_body(std::string_view body, const ChatRequest& req) {
  try {
    Json j = Json::parse(body);
    ChatResponse resp;
    const Json& choice = j.at("choices").at(0);
    const Json& content = choice.at("message").at("content");
    resp.text = content.is_null() ? std::string{} : content.get<std::string>();
    resp.model_id = j.value("model", req.model_id);
    if (j.contains("usage") && j["usage"].is_object()) {
      resp.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      resp.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    if (resp.text.empty()) {
      resp.warning = fmt::format("empty completion (finish_reason={})", choice.value("finish_reason", std::string("unknown")));
    }
    return resp;
  } catch (const Json::exception& e) {
    fail(ErrorCode::BackendError, std::string("unexpected chat-completions response: ") + e.what());
  }
}

ChatResponse RemoteBackend::complete(const ChatRequest& req) {
  validate(req);
  std::string bearer = bearer_from_env(cfg_.auth_env);
  auto start = std::chrono::steady_clock::now();
  RetryOutcome out = post_with_retries(transport_, cfg_.endpoint, bearer, encode_body(req), cfg_.max_retries, cfg_.backoff);
  ChatResponse resp = decode_body(out.body, req);
  resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  resp.retries = out.retries;
  resp.timestamp = util::utc_timestamp_now();
  if (out.retries > 0) spdlog::info("request to {} succeeded after {} retries", cfg_.endpoint, out.retries);
  return resp;
}

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& cfg) {
  validate(cfg);
  std::shared_ptr<CompletionBackend> inner;
  if (cfg.kind == BackendKind::Replay) {
    inner = std::make_shared<ReplayBackend>(cfg.transcript_path);
  } else {
    inner = std::make_shared<RemoteBackend>(cfg);
    if (!cfg.transcript_path.empty()) inner = std::make_shared<RecordingBackend>(inner, cfg.transcript_path);
  }
  return std::make_shared<ThrottledBackend>(inner, cfg.max_concurrency, cfg.requests_per_minute);
}

}  // namespace poda::llm
