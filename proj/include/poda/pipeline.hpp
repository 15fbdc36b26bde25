#pragma once

// The premise-oriented augmentation workflow: annotate a rationale, split
// its premises by the gold answer, generate replacement premises and a new
// context for every candidate answer, and keep only the contexts whose
// independent re-annotation lands on the intended answer.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poda/dataset.hpp"
#include "poda/llm_client.hpp"
#include "poda/prompts.hpp"
#include "poda/rationale.hpp"
#include "poda/serialization.hpp"

namespace poda::pipeline {

using prompts::Stage;

struct StageOutcome {
  Stage stage = Stage::CRA;
  int attempt = 1;
  std::optional<std::size_t> flip;  // target answer for PG/CG/CV
  std::string digest;
  std::string model_id;
  std::string timestamp;
  bool responded = false;  // false when the backend call itself failed
  std::string raw_text;
  std::optional<rationale::Rationale> parsed;
  bool accepted = false;
  std::optional<RejectionReason> reason;

  bool operator==(const StageOutcome&) const = default;
};

Json to_json(const StageOutcome& o);
StageOutcome outcome_from_json(const Json& j);

enum class CandidateMode { AllIncorrect, Listed };

struct JobConfig {
  int max_correction_rounds = 1;
  CandidateMode candidates = CandidateMode::AllIncorrect;
  std::vector<std::size_t> listed_candidates;
  bool skip_absolute_wording = false;
  std::vector<std::string> absolute_lexicon{"must", "can't", "cannot", "always", "never", "certainly", "impossible"};
  prompts::Sampling cra = prompts::generation_sampling("gpt-4-0613");
  prompts::Sampling pg = prompts::generation_sampling("gpt-4-0125-preview");
  prompts::Sampling cg = prompts::generation_sampling("gpt-4-0125-preview");
  prompts::Sampling cv = prompts::generation_sampling("gpt-4-0613");
  std::filesystem::path checkpoint_dir;  // empty: no checkpointing
  int parallelism = 1;                   // concurrent samples
};

// Throws Error{ConfigError}.
void validate(const JobConfig& cfg);

struct Exemplars {
  prompts::ExemplarSet cra;
  prompts::ExemplarSet pg;
  prompts::ExemplarSet cg;
  prompts::ExemplarSet cv;
};

// Loads cra.txt, pg.txt, cg.txt and cv.txt from `dir`.
Exemplars load_exemplars(const std::filesystem::path& dir);

// True when `text` contains a lexicon term as a whole word (case-insensitive).
bool has_absolute_wording(std::string_view text, std::span<const std::string> lexicon);

// Candidate new answers for a sample under `cfg`, ascending, never the gold.
std::vector<std::size_t> candidate_answers(const McqSample& sample, const JobConfig& cfg);

struct AnnotationResult {
  std::optional<rationale::Rationale> rationale;
  std::vector<StageOutcome> outcomes;
  std::optional<RejectionReason> rejection;
};

struct FlipResult {
  CounterfactualRecord record;
  std::vector<StageOutcome> outcomes;
};

struct SampleResult {
  std::string sample_id;
  AnnotationResult annotation;
  std::vector<FlipResult> flips;
};

struct JobSummary {
  std::size_t samples = 0;
  std::size_t annotated = 0;
  std::size_t flips = 0;
  // Keys: "Verified" plus a rejection kind name per rejected flip or
  // rejected annotation. Zero counts are omitted.
  std::map<std::string, std::size_t> counts;

  bool operator==(const JobSummary&) const = default;
};

Json to_json(const JobSummary& s);
std::string render_table(const JobSummary& s);

struct JobResult {
  std::vector<SampleResult> samples;  // input order
  JobSummary summary;

  // Every record of every sample, ordered by (origin_id, new_answer).
  std::vector<CounterfactualRecord> records() const;
};

// Response cache and outcome log for one sample. Responses are looked up by
// request digest so a resumed job reuses them instead of calling the backend.
class SampleCheckpoint {
 public:
  SampleCheckpoint() = default;  // in-memory only
  SampleCheckpoint(std::filesystem::path file, std::string sample_id);

  std::optional<llm::ChatResponse> lookup(const std::string& digest) const;
  void append(const StageOutcome& outcome);

 private:
  void save() const;

  std::filesystem::path file_;
  std::string sample_id_;
  std::map<std::string, StageOutcome> cache_;
  std::vector<StageOutcome> log_;
};

class Engine {
 public:
  Engine(std::shared_ptr<llm::CompletionBackend> backend, Exemplars exemplars, JobConfig cfg);

  // CoT rationale annotation with up to max_correction_rounds hinted
  // retries. Accepts the first rationale whose prediction matches the gold.
  AnnotationResult annotate(const McqSample& sample);
  AnnotationResult annotate(const McqSample& sample, SampleCheckpoint& checkpoint);

  // One record per candidate answer; per-flip failures are captured in the
  // record. Requires r.predicted == sample.answer.
  std::vector<FlipResult> augment(const McqSample& sample, const rationale::Rationale& r);
  std::vector<FlipResult> augment(const McqSample& sample, const rationale::Rationale& r, SampleCheckpoint& checkpoint);

  // Annotates and augments every sample with bounded parallelism,
  // checkpointing each stage output. When `output_dir` is non-empty writes
  // records.jsonl, annotations.jsonl, summary.json and summary.txt there.
  JobResult run_job(std::span<const McqSample> samples, const std::filesystem::path& output_dir = {});

  // Annotation only; writes annotations.jsonl and summary files when
  // `output_dir` is non-empty.
  JobResult run_annotation(std::span<const McqSample> samples, const std::filesystem::path& output_dir = {});

  const JobConfig& config() const noexcept { return cfg_; }

 private:
  struct Call {
    std::optional<llm::ChatResponse> response;
    StageOutcome outcome;
  };
  Call call(const llm::ChatRequest& req, Stage stage, int attempt, std::optional<std::size_t> flip,
            SampleCheckpoint& checkpoint);
  FlipResult augment_one(const McqSample& sample, const rationale::Rationale& r, std::size_t target,
                         SampleCheckpoint& checkpoint);
  JobResult run(std::span<const McqSample> samples, const std::filesystem::path& output_dir, bool augment);

  std::shared_ptr<llm::CompletionBackend> backend_;
  Exemplars exemplars_;
  JobConfig cfg_;
};

}  // namespace poda::pipeline
