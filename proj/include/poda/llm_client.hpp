#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poda/rate_limit.hpp"

namespace poda::llm {

enum class Role { System, User, Assistant };

std::string_view role_name(Role r) noexcept;
Role parse_role(std::string_view name);

struct Message {
  Role role = Role::User;
  std::string text;

  bool operator==(const Message&) const = default;
};

inline constexpr int kDefaultMaxTokens = 2048;

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.75;
  double top_p = 0.9;
  int max_tokens = kDefaultMaxTokens;
  std::optional<std::string> seed_tag;

  bool operator==(const ChatRequest&) const = default;
};

// Throws Error{InvalidArgument}: no messages, last message not from the
// user, temperature < 0, top_p outside (0,1], max_tokens < 1.
void validate(const ChatRequest& req);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string text;
  std::string model_id;
  Usage usage;
  std::int64_t latency_ms = 0;
  // When the response was produced. Replay returns the recorded value so
  // downstream artifacts stay byte-identical.
  std::string timestamp;
  int retries = 0;
  std::optional<std::string> warning;

  bool operator==(const ChatResponse&) const = default;
};

// SHA-256 over a canonical JSON encoding of (model_id, messages,
// temperature, top_p, seed_tag). max_tokens is not part of the key.
std::string request_digest(const ChatRequest& req);

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  // Safe for concurrent invocation.
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct Backoff {
  std::int64_t base_ms = 500;
  double factor = 2.0;
  std::int64_t cap_ms = 30'000;

  // Delay before retry number `retry` (0-based).
  std::chrono::milliseconds delay(int retry) const;
};

enum class BackendKind { Remote, Replay };

struct BackendConfig {
  BackendKind kind = BackendKind::Replay;
  std::string endpoint;  // full chat-completions URL for Remote
  std::string auth_env = "OPENAI_API_KEY";
  // Replay: transcript to answer from. Remote: transcript to append to
  // (recording); empty disables recording.
  std::filesystem::path transcript_path;
  int max_retries = 5;
  Backoff backoff;
  int max_concurrency = 4;
  std::optional<int> requests_per_minute;
  std::chrono::milliseconds timeout{120'000};
};

// Throws Error{ConfigError}.
void validate(const BackendConfig& cfg);

// One transcript line: {digest, request, response, timestamp}.
struct TranscriptEntry {
  std::string digest;
  ChatRequest request;
  ChatResponse response;
  std::string timestamp;
};

std::string encode_transcript_entry(const TranscriptEntry& e);
TranscriptEntry decode_transcript_entry(std::string_view line);
std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path);

// Answers from a recorded transcript by exact digest match. The first entry
// wins when a digest repeats. Errors: ReplayMiss, UnreadablePath.
class ReplayBackend final : public CompletionBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& transcript);
  explicit ReplayBackend(std::vector<TranscriptEntry> entries);

  ChatResponse complete(const ChatRequest& req) override;

  std::size_t size() const noexcept { return responses_.size(); }
  std::size_t calls() const;
  // Number of times each digest has been requested.
  std::map<std::string, int> call_counts() const;

 private:
  std::map<std::string, ChatResponse> responses_;
  mutable std::mutex mu_;
  std::map<std::string, int> counts_;
};

// Appends every successful call of `inner` to an append-only transcript.
class RecordingBackend final : public CompletionBackend {
 public:
  RecordingBackend(std::shared_ptr<CompletionBackend> inner, std::filesystem::path transcript);

  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::shared_ptr<CompletionBackend> inner_;
  std::filesystem::path path_;
  std::mutex mu_;
};

// Bounds in-flight requests and request rate for any backend.
class ThrottledBackend final : public CompletionBackend {
 public:
  ThrottledBackend(std::shared_ptr<CompletionBackend> inner, int max_concurrency,
                   std::optional<int> requests_per_minute, std::shared_ptr<Clock> clock = nullptr);

  ChatResponse complete(const ChatRequest& req) override;

  int max_in_flight_observed() const { return gate_.max_observed(); }

 private:
  std::shared_ptr<CompletionBackend> inner_;
  ConcurrencyGate gate_;
  std::optional<SlidingWindowLimiter> limiter_;
};

// What a single HTTP exchange produced; `status` 0 means no response
// (connection failure).
struct HttpResult {
  int status = 0;
  std::string body;
  std::string error;
  std::optional<std::chrono::milliseconds> retry_after;
};

// Injectable transport so retry behaviour can be tested without sockets.
using HttpPost = std::function<HttpResult(const std::string& url, const std::string& bearer, const std::string& body)>;

// Default transport over cpp-httplib (http and https).
HttpPost make_http_transport(std::chrono::milliseconds timeout);

// POSTs JSON with bearer auth, retrying connection failures, 429 and 5xx
// with exponential backoff. Returns the 2xx body. Errors: RateLimited (429
// after retries), BackendUnreachable, BackendError (non-retryable status).
struct RetryOutcome {
  std::string body;
  int retries = 0;
};
RetryOutcome post_with_retries(const HttpPost& transport, const std::string& url, const std::string& bearer,
                               const std::string& body, int max_retries, const Backoff& backoff,
                               const std::function<void(std::chrono::milliseconds)>& sleep = {});

// Reads the bearer token from the named environment variable.
// Errors: AuthMissing.
std::string bearer_from_env(const std::string& var);

// OpenAI-compatible chat-completions client.
class RemoteBackend final : public CompletionBackend {
 public:
  explicit RemoteBackend(BackendConfig cfg, HttpPost transport = {});

  ChatResponse complete(const ChatRequest& req) override;

  static std::string encode_body(const ChatRequest& req);
  static ChatResponse decode_body(std::string_view body, const ChatRequest& req);

 private:
  BackendConfig cfg_;
  HttpPost transport_;
};

// Remote: Throttled(Recording?(Remote)); Replay: Throttled(Replay).
std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& cfg);

}  // namespace poda::llm
