#pragma once

// Deterministic stand-ins for a model, used to record transcripts and to
// drive the workflow engine in tests.

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "poda/dataset.hpp"
#include "poda/error.hpp"
#include "poda/llm_client.hpp"
#include "poda/pipeline.hpp"
#include "poda/rationale.hpp"

namespace poda::testing {

// `n` four-option samples with distinct contexts, questions and options.
// Gold answers cycle a, b, c, d.
std::vector<McqSample> make_samples(std::size_t n, const std::string& prefix = "s");

// The rationale the scripted model writes for `sample` when it picks
// `predicted`: three premises, the gold option supported by premises 2
// and 3, the predicted option (if different) supported by premise 1.
rationale::Rationale scripted_rationale(const McqSample& sample, std::size_t predicted);

// Answers every stage:
//   CRA: the rationale for the gold answer (or for `cra_answer(id)` when set).
//   PG:  two premises naming the sample and the target label.
//   CG:  a context naming the sample and the target label.
//   CV:  a rationale predicting the target when `cv_agrees(id, target)`,
//        otherwise the gold answer.
class ScriptedBackend final : public llm::CompletionBackend {
 public:
  explicit ScriptedBackend(std::vector<McqSample> samples);

  llm::ChatResponse complete(const llm::ChatRequest& req) override;

  std::function<bool(const std::string& id, std::size_t target)> cv_agrees = [](const std::string&, std::size_t) {
    return true;
  };
  // Per-attempt answer override for annotation: called with the sample id
  // and whether the prompt carries a hint.
  std::function<std::size_t(const McqSample&, bool hinted)> cra_answer;
  // Raw reply override per stage, checked before the defaults.
  std::function<std::optional<std::string>(const std::string& stage, const llm::ChatRequest&)> override_reply;

  std::size_t calls() const { return calls_.load(); }
  std::map<std::string, int> stage_calls() const;

 private:
  const McqSample& by_context(const std::string& context) const;
  const McqSample* find_by_id(const std::string& id) const;

  std::vector<McqSample> samples_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mu_;
  std::map<std::string, int> stage_calls_;
};

// Throws std::runtime_error on the call after `limit` successful calls,
// without forwarding it. Simulates a process being killed.
class KillAfter final : public llm::CompletionBackend {
 public:
  KillAfter(std::shared_ptr<llm::CompletionBackend> inner, std::size_t limit) : inner_(std::move(inner)), limit_(limit) {}
  llm::ChatResponse complete(const llm::ChatRequest& req) override;

 private:
  std::shared_ptr<llm::CompletionBackend> inner_;
  std::size_t limit_;
  std::atomic<std::size_t> done_{0};
};

// Backend that always throws the given error code.
class FailingBackend final : public llm::CompletionBackend {
 public:
  explicit FailingBackend(ErrorCode code) : code_(code) {}
  llm::ChatResponse complete(const llm::ChatRequest& req) override;

 private:
  ErrorCode code_;
};

// Engine exemplars loaded from the repository's default files.
pipeline::Exemplars default_exemplars();

// Fresh, empty temporary directory unique to this process and tag.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace poda::testing
