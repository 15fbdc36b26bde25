#include "poda/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/util.hpp"

namespace poda::prompts {
namespace {

using llm::ChatRequest;
using llm::Message;
using llm::Role;

constexpr std::string_view kRationaleInstructions =
    "You are an expert at logical reasoning. Read the context, the question and the options, then answer in "
    "exactly the following structure.\n"
    "\n"
    "Summarize Premises:\n"
    "1. <a premise: a piece of known information stated in the context>\n"
    "2. <another premise>\n"
    "...\n"
    "Analyze Options:\n"
    "(a) <reasoning about option (a)>\n"
    "Identify Premises: <Supported by premise(s) N | Contradicted by premise(s) N | Unrelated to the premises>.\n"
    "(b) <reasoning about option (b)>\n"
    "Identify Premises: ...\n"
    "(one block per option, in option order)\n"
    "\n"
    "<A summary of the thought-paths>. Therefore, the optimal correct answer is (x).";

constexpr std::string_view kPremiseInstructions =
    "Premises are written in a masked natural language inference format: the premises that support the answer "
    "to a question are hidden behind the token [blank]. Given a question and an answer, complete [blank] with "
    "creative premises that make the answer the correct one. Write one premise per line and nothing else.";

constexpr std::string_view kContextInstructions =
    "Given a list of premises, craft a creative and coherent context that develops the ideas and scenarios they "
    "present. Every premise must hold in the context. Write only the context.";

constexpr std::string_view kJudgeInstructions =
    "You are a careful and strict evaluator of reading comprehension material.";

std::string escape_blank(std::string_view text) {
  std::string out(text);
  std::size_t pos = 0;
  while ((pos = out.find(kBlankToken, pos)) != std::string::npos) {
    out.replace(pos, kBlankToken.size(), "(blank)");
    pos += 7;
  }
  return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

void add_shots(ChatRequest& req, const ExemplarSet& shots, std::size_t limit) {
  for (std::size_t i = 0; i < shots.shots.size() && i < limit; ++i) {
    req.messages.push_back({Role::User, shots.shots[i].input});
    req.messages.push_back({Role::Assistant, shots.shots[i].output});
  }
}

ChatRequest start_request(const Sampling& s, std::string_view system) {
  ChatRequest req;
  req.model_id = s.model_id;
  req.temperature = s.temperature;
  req.top_p = s.top_p;
  req.max_tokens = s.max_tokens;
  req.messages.push_back({Role::System, std::string(system)});
  return req;
}

void require_stage(const ExemplarSet& shots, std::initializer_list<Stage> allowed, std::string_view builder) {
  if (std::find(allowed.begin(), allowed.end(), shots.stage) == allowed.end()) {
    fail(ErrorCode::InvalidExemplars,
         fmt::format("{} needs {} exemplars, got {}", builder, stage_name(*allowed.begin()), stage_name(shots.stage)));
  }
}

std::string render_pg_frame(std::string_view question, std::string_view answer) {
  return fmt::format("Question: {}\nAnswer: {}\nPremises: {}", escape_blank(question), escape_blank(answer), kBlankToken);
}

std::string render_premise_list(std::span<const std::string> premises) {
  std::string out = "Premises:";
  for (std::size_t i = 0; i < premises.size(); ++i) out += fmt::format("\n{}. {}", i + 1, premises[i]);
  return out;
}

ChatRequest rationale_request(const McqSample& sample, const ExemplarSet& shots, std::size_t limit,
                              std::optional<std::size_t> gold_hint, const Sampling& sampling) {
  validate(sample);
  ChatRequest req = start_request(sampling, kRationaleInstructions);
  add_shots(req, shots, limit);
  std::string query = render_sample_block(sample);
  if (gold_hint) {
    if (*gold_hint >= sample.options.size()) fail(ErrorCode::InvalidArgument, "gold hint out of range");
    std::string tag = rationale::option_tag(*gold_hint);
    query += fmt::format(
        "\n\nHint: the correct answer is {}. Refine your reasoning so that the analysis of every option is "
        "consistent with {} being correct, and keep the same output structure.",
        tag, tag);
  }
  req.messages.push_back({Role::User, std::move(query)});
  return req;
}

}  // namespace

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::CRA: return "CRA";
    case Stage::PG: return "PG";
    case Stage::CG: return "CG";
    case Stage::CV: return "CV";
    case Stage::Eval: return "Eval";
  }
  return "CRA";
}

Stage parse_stage(std::string_view name) {
  std::string n = util::to_lower(name);
  if (n == "cra") return Stage::CRA;
  if (n == "pg") return Stage::PG;
  if (n == "cg") return Stage::CG;
  if (n == "cv") return Stage::CV;
  if (n == "eval") return Stage::Eval;
  fail(ErrorCode::InvalidExemplars, fmt::format("unknown stage \"{}\"", name));
}

void validate(const ExemplarSet& set) {
  const std::string where = set.source_path.empty() ? std::string("exemplar set") : set.source_path.string();
  if (set.shots.empty()) {
    fail(ErrorCode::InvalidExemplars, fmt::format("{}: {} needs at least one shot", where, stage_name(set.stage)));
  }
  for (std::size_t i = 0; i < set.shots.size(); ++i) {
    const Shot& shot = set.shots[i];
    if (util::trim(shot.input).empty()) fail(ErrorCode::InvalidExemplars, fmt::format("{}: shot {} has no input", where, i + 1));
    switch (set.stage) {
      case Stage::CRA:
      case Stage::CV:
      case Stage::Eval: {
        std::size_t n = count_rendered_options(shot.input);
        try {
          rationale::parse_rationale(shot.output, n);
        } catch (const Error& e) {
          fail(ErrorCode::InvalidExemplars, fmt::format("{}: shot {} output does not parse: {}", where, i + 1, e.what()));
        }
        break;
      }
      case Stage::PG:
        if (count_occurrences(shot.input, kBlankToken) != 1) {
          fail(ErrorCode::InvalidExemplars, fmt::format("{}: shot {} must contain {} exactly once", where, i + 1, kBlankToken));
        }
        break;
      case Stage::CG:
        if (util::trim(shot.output).empty()) fail(ErrorCode::InvalidExemplars, fmt::format("{}: shot {} has no output", where, i + 1));
        break;
    }
  }
}

ExemplarSet parse_exemplars(std::string_view text, const std::filesystem::path& source) {
  ExemplarSet set;
  set.source_path = source;
  bool have_stage = false;
  enum class Block { None, Input, Output } block = Block::None;
  std::vector<std::string> buf;

  auto flush = [&] {
    std::size_t b = 0, e = buf.size();
    while (b < e && util::trim(buf[b]).empty()) ++b;
    while (e > b && util::trim(buf[e - 1]).empty()) --e;
    std::string joined;
    for (std::size_t i = b; i < e; ++i) {
      if (i > b) joined += '\n';
      joined += buf[i];
    }
    if (block == Block::Input) {
      set.shots.push_back({std::move(joined), {}});
    } else if (block == Block::Output) {
      set.shots.back().output = std::move(joined);
    }
    buf.clear();
  };

  for (const auto& line : util::split_lines(text)) {
    std::string_view t = util::trim(line);
    if (block == Block::None && (t.empty() || t.front() == '#')) continue;
    if (t.rfind("@stage", 0) == 0) {
      set.stage = parse_stage(util::trim(t.substr(6)));
      have_stage = true;
      continue;
    }
    if (t == "=== input ===") {
      if (block == Block::Input) fail(ErrorCode::InvalidExemplars, "input block without output block");
      flush();
      block = Block::Input;
      continue;
    }
    if (t == "=== output ===") {
      if (block != Block::Input) fail(ErrorCode::InvalidExemplars, "output block without preceding input block");
      flush();
      block = Block::Output;
      continue;
    }
    if (block == Block::None) fail(ErrorCode::InvalidExemplars, fmt::format("unexpected line outside a block: {}", line));
    buf.push_back(line);
  }
  if (block == Block::Input) fail(ErrorCode::InvalidExemplars, "last input block has no output block");
  flush();
  if (!have_stage) fail(ErrorCode::InvalidExemplars, "missing @stage line");
  validate(set);
  return set;
}

ExemplarSet load_exemplars(const std::filesystem::path& path) { return parse_exemplars(util::read_file(path), path); }

std::string render_exemplars(const ExemplarSet& set) {
  std::string out = fmt::format("@stage {}\n", stage_name(set.stage));
  for (const auto& shot : set.shots) {
    out += fmt::format("=== input ===\n{}\n=== output ===\n{}\n", shot.input, shot.output);
  }
  return out;
}

Sampling generation_sampling(std::string model_id) { return {std::move(model_id), 0.75, 0.9, llm::kDefaultMaxTokens}; }

Sampling evaluation_sampling(std::string model_id) { return {std::move(model_id), 0.0, 1.0, llm::kDefaultMaxTokens}; }

std::string render_sample_block(const McqSample& sample) {
  std::string out = fmt::format("Context: {}\nQuestion: {}\nOptions:", sample.context, sample.question);
  for (std::size_t i = 0; i < sample.options.size(); ++i) {
    out += fmt::format("\n{} {}", rationale::option_tag(i), sample.options[i]);
  }
  return out;
}

std::size_t count_rendered_options(std::string_view input) {
  auto lines = util::split_lines(input);
  std::size_t n = 0;
  bool in_options = false;
  for (const auto& line : lines) {
    std::string_view t = util::trim(line);
    if (!in_options) {
      in_options = util::to_lower(t).rfind("options:", 0) == 0;
      continue;
    }
    if (t.size() >= 3 && t[0] == '(' && t[2] == ')' && rationale::label_index(t[1]) == n) {
      ++n;
    } else if (!t.empty() && n > 0) {
      break;
    }
  }
  return n;
}

ChatRequest build_cra_prompt(const McqSample& sample, const ExemplarSet& shots, std::optional<std::size_t> gold_hint,
                             const Sampling& sampling) {
  require_stage(shots, {Stage::CRA}, "build_cra_prompt");
  return rationale_request(sample, shots, shots.shots.size(), gold_hint, sampling);
}

ChatRequest build_cv_prompt(const McqSample& sample, const ExemplarSet& shots, const Sampling& sampling) {
  require_stage(shots, {Stage::CV}, "build_cv_prompt");
  return rationale_request(sample, shots, shots.shots.size(), std::nullopt, sampling);
}

ChatRequest build_eval_prompt(const McqSample& sample, const ExemplarSet& shots, std::size_t k, const Sampling& sampling) {
  if (k > shots.shots.size()) {
    fail(ErrorCode::InvalidArgument, fmt::format("{}-shot evaluation needs {} exemplars, have {}", k, k, shots.shots.size()));
  }
  return rationale_request(sample, shots, k, std::nullopt, sampling);
}

ChatRequest build_pg_prompt(std::string_view question, std::string_view current_answer,
                            std::span<const rationale::Premise> linked_premises, std::string_view new_answer,
                            const ExemplarSet& shots, const Sampling& sampling) {
  require_stage(shots, {Stage::PG}, "build_pg_prompt");
  ChatRequest req = start_request(sampling, kPremiseInstructions);
  add_shots(req, shots, shots.shots.size());
  std::string completion;
  for (std::size_t i = 0; i < linked_premises.size(); ++i) {
    if (i) completion += '\n';
    completion += linked_premises[i].text;
  }
  req.messages.push_back({Role::User, render_pg_frame(question, current_answer)});
  req.messages.push_back({Role::Assistant, std::move(completion)});
  req.messages.push_back({Role::User, render_pg_frame(question, new_answer)});
  return req;
}

std::vector<std::string> reorganize_premises(std::span<const rationale::Premise> original, std::span<const int> removed,
                                             std::span<const std::string> added) {
  std::set<int> removed_set(removed.begin(), removed.end());
  std::vector<std::string> out;
  std::size_t next = 0;
  std::size_t removed_seen = 0;
  const std::size_t removed_present = static_cast<std::size_t>(std::count_if(
      original.begin(), original.end(), [&](const auto& p) { return removed_set.count(p.index) > 0; }));
  for (const auto& p : original) {
    if (!removed_set.count(p.index)) {
      out.push_back(p.text);
      continue;
    }
    ++removed_seen;
    if (next < added.size()) out.push_back(added[next++]);
    if (removed_seen == removed_present) {
      while (next < added.size()) out.push_back(added[next++]);
    }
  }
  while (next < added.size()) out.push_back(added[next++]);
  return out;
}

ChatRequest build_cg_prompt(std::span<const rationale::Premise> original, std::string_view original_context,
                            std::span<const int> removed, std::span<const std::string> added, const ExemplarSet& shots,
                            const Sampling& sampling) {
  require_stage(shots, {Stage::CG}, "build_cg_prompt");
  ChatRequest req = start_request(sampling, kContextInstructions);
  add_shots(req, shots, shots.shots.size());
  std::vector<std::string> all;
  for (const auto& p : original) all.push_back(p.text);
  req.messages.push_back({Role::User, render_premise_list(all)});
  req.messages.push_back({Role::Assistant, std::string(original_context)});
  req.messages.push_back({Role::User, render_premise_list(reorganize_premises(original, removed, added))});
  return req;
}

const std::string& query_segment(const ChatRequest& req) {
  if (req.messages.empty()) fail(ErrorCode::InvalidArgument, "request has no messages");
  return req.messages.back().text;
}

std::vector<std::string> parse_generated_premises(std::string_view reply) {
  std::vector<std::string> out;
  for (const auto& line : util::split_lines(reply)) {
    std::string_view t = util::trim(line);
    if (t.empty()) continue;
    std::string lower = util::to_lower(t);
    if (lower.rfind("premises:", 0) == 0) {
      t = util::trim(t.substr(9));
      if (t.empty()) continue;
    }
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
      t = util::trim(t.substr(i + 1));
    } else if (t.front() == '-' || t.front() == '*') {
      t = util::trim(t.substr(1));
    }
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::string parse_generated_context(std::string_view reply) {
  std::string_view t = util::trim(reply);
  if (util::to_lower(t.substr(0, 8)) == "context:") t = util::trim(t.substr(8));
  return std::string(t);
}

std::string_view rubric_target_name(RubricTarget t) noexcept {
  return t == RubricTarget::Context ? "Context" : "RationaleCoT";
}

std::string_view rubric_metric_name(RubricMetric m) noexcept {
  switch (m) {
    case RubricMetric::Coherence: return "Coherence";
    case RubricMetric::Clarity: return "Clarity";
    case RubricMetric::Relevance: return "Relevance";
    case RubricMetric::Diversity: return "Diversity";
    case RubricMetric::Completeness: return "Completeness";
    case RubricMetric::Faithfulness: return "Faithfulness";
  }
  return "Coherence";
}

RubricTarget parse_rubric_target(std::string_view name) {
  std::string n = util::to_lower(name);
  if (n == "context") return RubricTarget::Context;
  if (n == "rationale" || n == "rationalecot" || n == "cot") return RubricTarget::RationaleCoT;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown rubric target \"{}\"", name));
}

RubricMetric parse_rubric_metric(std::string_view name) {
  std::string n = util::to_lower(name);
  for (auto m : {RubricMetric::Coherence, RubricMetric::Clarity, RubricMetric::Relevance, RubricMetric::Diversity,
                 RubricMetric::Completeness, RubricMetric::Faithfulness}) {
    if (util::to_lower(rubric_metric_name(m)) == n) return m;
  }
  fail(ErrorCode::InvalidArgument, fmt::format("unknown rubric metric \"{}\"", name));
}

RubricSpec default_rubric(RubricTarget target, RubricMetric metric) {
  RubricSpec spec{target, metric, {}, 1, 5};
  if (target == RubricTarget::Context) {
    switch (metric) {
      case RubricMetric::Coherence: spec.question_text = "Do the ideas in the context connect, with no internal contradictions?"; break;
      case RubricMetric::Clarity: spec.question_text = "How easy is the context to read and understand?"; break;
      case RubricMetric::Relevance: spec.question_text = "How closely does the context bear on the question and its options?"; break;
      case RubricMetric::Diversity:
        spec.question_text = "How far does the counterfactual context depart from the original context?";
        break;
      default:
        fail(ErrorCode::InvalidArgument, fmt::format("metric {} does not apply to contexts", rubric_metric_name(metric)));
    }
  } else {
    switch (metric) {
      case RubricMetric::Coherence: spec.question_text = "Does the rationale hold together without logical contradictions?"; break;
      case RubricMetric::Completeness: spec.question_text = "How fully does the rationale explain the reasoning behind each option?"; break;
      case RubricMetric::Relevance:
        spec.question_text = "How directly does the rationale engage with the context, question and options?";
        break;
      case RubricMetric::Faithfulness:
        spec.question_text = "Does the rationale stay true to the context without invented facts?";
        break;
      default:
        fail(ErrorCode::InvalidArgument, fmt::format("metric {} does not apply to rationales", rubric_metric_name(metric)));
    }
  }
  return spec;
}

std::vector<RubricSpec> default_rubrics(RubricTarget target) {
  if (target == RubricTarget::Context) {
    return {default_rubric(target, RubricMetric::Coherence), default_rubric(target, RubricMetric::Clarity),
            default_rubric(target, RubricMetric::Relevance), default_rubric(target, RubricMetric::Diversity)};
  }
  return {default_rubric(target, RubricMetric::Coherence), default_rubric(target, RubricMetric::Completeness),
          default_rubric(target, RubricMetric::Relevance), default_rubric(target, RubricMetric::Faithfulness)};
}

ChatRequest build_rubric_prompt(const RubricSpec& spec, const RubricPayload& payload, const Sampling& sampling) {
  default_rubric(spec.target, spec.metric);  // legality check
  auto need = [&](bool present, std::string_view what) {
    if (!present) {
      fail(ErrorCode::PayloadMismatch, fmt::format("{}/{} needs {}", rubric_target_name(spec.target),
                                                   rubric_metric_name(spec.metric), what));
    }
  };
  const bool is_context = spec.target == RubricTarget::Context;
  const bool needs_qa = spec.metric == RubricMetric::Relevance;
  if (is_context) {
    need(payload.context.has_value(), "the context");
    if (spec.metric == RubricMetric::Diversity) need(payload.original_context.has_value(), "the original context");
  } else {
    need(payload.rationale.has_value(), "the rationale");
    if (spec.metric == RubricMetric::Relevance || spec.metric == RubricMetric::Faithfulness) {
      need(payload.context.has_value(), "the context");
    }
  }
  if (needs_qa) need(payload.question.has_value() && !payload.options.empty(), "the question and options");

  std::string body;
  if (is_context && spec.metric == RubricMetric::Diversity) {
    body += fmt::format("Original context: {}\nCounterfactual context: {}\n", *payload.original_context, *payload.context);
  } else if (payload.context) {
    body += fmt::format("Context: {}\n", *payload.context);
  }
  if (payload.question && (needs_qa || !is_context)) body += fmt::format("Question: {}\n", *payload.question);
  if (!payload.options.empty() && (needs_qa || !is_context)) {
    body += "Options:\n";
    for (std::size_t i = 0; i < payload.options.size(); ++i) {
      body += fmt::format("{} {}\n", rationale::option_tag(i), payload.options[i]);
    }
  }
  if (!is_context) body += fmt::format("Rationale:\n{}\n", *payload.rationale);

  body += fmt::format(
      "\nEvaluate the {} on {}: {}\n"
      "Rate it on a scale from {} (poor) to {} (excellent). Give a one-line justification, then end your reply with "
      "a final line of the form \"Score: N\" where N is an integer from {} to {}.",
      is_context ? "context" : "rationale", util::to_lower(rubric_metric_name(spec.metric)), spec.question_text,
      spec.scale_min, spec.scale_max, spec.scale_min, spec.scale_max);

  ChatRequest req = start_request(sampling, kJudgeInstructions);
  req.messages.push_back({Role::User, std::move(body)});
  return req;
}

std::optional<int> extract_score(std::string_view reply) {
  std::optional<int> score;
  for (const auto& line : util::split_lines(reply)) {
    std::string_view t = util::trim(line);
    while (!t.empty() && (t.front() == '*' || t.front() == '#')) t.remove_prefix(1);
    while (!t.empty() && (t.back() == '*' || t.back() == '.')) t.remove_suffix(1);
    t = util::trim(t);
    if (util::to_lower(t.substr(0, 6)) != "score:") continue;
    std::string_view n = util::trim(t.substr(6));
    if (n.size() == 1 && n[0] >= '1' && n[0] <= '5') score = n[0] - '0';
  }
  return score;
}

}  // namespace poda::prompts
