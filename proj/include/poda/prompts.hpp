#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poda/dataset.hpp"
#include "poda/llm_client.hpp"
#include "poda/rationale.hpp"

namespace poda::prompts {

enum class Stage { CRA, PG, CG, CV, Eval };

std::string_view stage_name(Stage s) noexcept;
Stage parse_stage(std::string_view name);

struct Shot {
  std::string input;
  std::string output;

  bool operator==(const Shot&) const = default;
};

// Few-shot demonstrations for one stage.
//
// File format (UTF-8, LF):
//
//   # comments start with '#'
//   @stage CRA
//   === input ===
//   ...
//   === output ===
//   ...
//   === input ===
//   ...
//
// Leading and trailing blank lines of each block are dropped.
struct ExemplarSet {
  Stage stage = Stage::CRA;
  std::vector<Shot> shots;
  std::filesystem::path source_path;
};

// Requires at least one shot. CRA, CV and Eval outputs must parse as
// rationales (option count taken from the rendered input); PG inputs must
// hold the [blank] token exactly once. Throws Error{InvalidExemplars}.
void validate(const ExemplarSet& set);

ExemplarSet parse_exemplars(std::string_view text, const std::filesystem::path& source = {});
ExemplarSet load_exemplars(const std::filesystem::path& path);
std::string render_exemplars(const ExemplarSet& set);

struct Sampling {
  std::string model_id;
  double temperature = 0.75;
  double top_p = 0.9;
  int max_tokens = llm::kDefaultMaxTokens;
};

// Generation stages sample at temperature 0.75 / top-p 0.9.
Sampling generation_sampling(std::string model_id);
// Accuracy evaluation decodes greedily (temperature 0).
Sampling evaluation_sampling(std::string model_id);

inline constexpr std::string_view kBlankToken = "[blank]";

// "Context: ...\nQuestion: ...\nOptions:\n(a) ...\n(b) ..."
std::string render_sample_block(const McqSample& sample);
// Counts "(a) ", "(b) ", ... lines following an "Options:" line.
std::size_t count_rendered_options(std::string_view input);

// Messages: system instructions, one user/assistant pair per shot, then the
// sample as the final user message. With `gold_hint` the final message also
// names the correct label and asks for reasoning that arrives at it.
llm::ChatRequest build_cra_prompt(const McqSample& sample, const ExemplarSet& shots,
                                  std::optional<std::size_t> gold_hint, const Sampling& sampling);

// Same layout as CRA with no hint.
llm::ChatRequest build_cv_prompt(const McqSample& sample, const ExemplarSet& shots, const Sampling& sampling);

// Masked-NLI premise generation. After the stage shots comes an exemplar
// built from the sample itself: (question, current answer) with [blank] for
// the answer-linked premises, completed by those premises one per line. The
// final user message (the query segment) repeats the frame for the new
// answer. Occurrences of [blank] inside the inserted texts are rewritten to
// "(blank)" so the query holds the token exactly once.
llm::ChatRequest build_pg_prompt(std::string_view question, std::string_view current_answer,
                                 std::span<const rationale::Premise> linked_premises, std::string_view new_answer,
                                 const ExemplarSet& shots, const Sampling& sampling);

// Builds P' from the original premise list: the new premises fill the
// positions of the removed ones in order; surplus new premises follow the
// last removed position; surplus removed positions are dropped. With no
// removed positions the new premises are appended.
std::vector<std::string> reorganize_premises(std::span<const rationale::Premise> original,
                                             std::span<const int> removed, std::span<const std::string> added);

// Context generation. The exemplar maps the full original premise list to
// the original context; the query lists the reorganized premises.
llm::ChatRequest build_cg_prompt(std::span<const rationale::Premise> original, std::string_view original_context,
                                 std::span<const int> removed, std::span<const std::string> added,
                                 const ExemplarSet& shots, const Sampling& sampling);

// CRA-shaped prompt over the first `k` shots, used for accuracy evaluation.
llm::ChatRequest build_eval_prompt(const McqSample& sample, const ExemplarSet& shots, std::size_t k,
                                   const Sampling& sampling);

// Text of the final user message.
const std::string& query_segment(const llm::ChatRequest& req);

// Strips list markers ("1.", "-", "*") and blank lines from a premise
// generation reply.
std::vector<std::string> parse_generated_premises(std::string_view reply);
// Trimmed reply with an optional leading "Context:" label removed.
std::string parse_generated_context(std::string_view reply);

enum class RubricTarget { Context, RationaleCoT };
enum class RubricMetric { Coherence, Clarity, Relevance, Diversity, Completeness, Faithfulness };

std::string_view rubric_target_name(RubricTarget t) noexcept;
std::string_view rubric_metric_name(RubricMetric m) noexcept;
RubricTarget parse_rubric_target(std::string_view name);
RubricMetric parse_rubric_metric(std::string_view name);

struct RubricSpec {
  RubricTarget target = RubricTarget::Context;
  RubricMetric metric = RubricMetric::Coherence;
  std::string question_text;
  int scale_min = 1;  // poor
  int scale_max = 5;  // excellent
};

// Throws Error{InvalidArgument} when the metric is not legal for the target.
RubricSpec default_rubric(RubricTarget target, RubricMetric metric);
// The four metrics of a target, in reporting order.
std::vector<RubricSpec> default_rubrics(RubricTarget target);

struct RubricPayload {
  std::optional<std::string> original_context;  // Diversity only
  std::optional<std::string> context;
  std::optional<std::string> question;
  std::vector<std::string> options;
  std::optional<std::string> rationale;
};

// Errors: PayloadMismatch when a text the metric needs is absent.
llm::ChatRequest build_rubric_prompt(const RubricSpec& spec, const RubricPayload& payload, const Sampling& sampling);

// Score from the last line of the form "Score: N" with N in [1,5].
std::optional<int> extract_score(std::string_view reply);

}  // namespace poda::prompts
