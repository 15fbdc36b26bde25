#include "poda/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "poda/error.hpp"
#include "poda/parallel.hpp"
#include "poda/util.hpp"

namespace poda::pipeline {

using poda::to_json;

namespace {

std::mutex& checkpoint_write_mutex() {
  static std::mutex mu;
  return mu;
}

StageLogEntry log_entry(const StageOutcome& o) {
  return {std::string(prompts::stage_name(o.stage)), o.model_id, o.timestamp, o.digest};
}

RejectionReason reason(RejectionKind kind, std::string detail = {}) {
  RejectionReason r;
  r.kind = kind;
  r.detail = std::move(detail);
  return r;
}

void write_job_outputs(const std::filesystem::path& dir, const JobResult& result, bool with_records) {
  if (dir.empty()) return;
  if (with_records) {
    auto records = result.records();
    save_records(dir / "records.jsonl", records);
  }
  std::string annotations;
  for (const auto& s : result.samples) {
    Json j;
    j["id"] = s.sample_id;
    j["accepted"] = s.annotation.rationale.has_value();
    if (s.annotation.rationale) {
      j["rationale"] = to_json(*s.annotation.rationale);
      j["text"] = rationale::render_rationale(*s.annotation.rationale);
    }
    if (s.annotation.rejection) j["rejection_reason"] = to_json(*s.annotation.rejection);
    j["attempts"] = s.annotation.outcomes.size();
    annotations += dump_line(j);
    annotations += '\n';
  }
  util::write_file_atomic(dir / "annotations.jsonl", annotations);
  util::write_file_atomic(dir / "summary.json", dump_pretty(to_json(result.summary)));
  util::write_file_atomic(dir / "summary.txt", render_table(result.summary));
}

}  // namespace

Json to_json(const StageOutcome& o) {
  Json j;
  j["stage"] = prompts::stage_name(o.stage);
  j["attempt"] = o.attempt;
  j["flip"] = o.flip ? Json(*o.flip) : Json(nullptr);
  j["digest"] = o.digest;
  j["model_id"] = o.model_id;
  j["timestamp"] = o.timestamp;
  j["responded"] = o.responded;
  j["raw_text"] = o.raw_text;
  j["parsed"] = o.parsed ? to_json(*o.parsed) : Json(nullptr);
  j["accepted"] = o.accepted;
  j["reason"] = o.reason ? to_json(*o.reason) : Json(nullptr);
  return j;
}

StageOutcome outcome_from_json(const Json& j) {
  StageOutcome o;
  o.stage = prompts::parse_stage(j.at("stage").get<std::string>());
  o.attempt = j.at("attempt").get<int>();
  if (!j.at("flip").is_null()) o.flip = j.at("flip").get<std::size_t>();
  o.digest = j.at("digest").get<std::string>();
  o.model_id = j.at("model_id").get<std::string>();
  o.timestamp = j.at("timestamp").get<std::string>();
  o.responded = j.at("responded").get<bool>();
  o.raw_text = j.at("raw_text").get<std::string>();
  if (!j.at("parsed").is_null()) o.parsed = rationale_from_json(j.at("parsed"));
  o.accepted = j.at("accepted").get<bool>();
  if (!j.at("reason").is_null()) o.reason = rejection_from_json(j.at("reason"));
  return o;
}

void validate(const JobConfig& cfg) {
  if (cfg.max_correction_rounds < 0) fail(ErrorCode::ConfigError, "max_correction_rounds must be >= 0");
  if (cfg.parallelism < 1) fail(ErrorCode::ConfigError, "parallelism must be positive");
  if (cfg.candidates == CandidateMode::Listed && cfg.listed_candidates.empty()) {
    fail(ErrorCode::ConfigError, "candidate mode Listed needs at least one candidate");
  }
  for (const auto* s : {&cfg.cra, &cfg.pg, &cfg.cg, &cfg.cv}) {
    if (s->model_id.empty()) fail(ErrorCode::ConfigError, "every stage needs a model id");
    if (!(s->temperature >= 0.0) || !(s->top_p > 0.0 && s->top_p <= 1.0) || s->max_tokens < 1) {
      fail(ErrorCode::ConfigError, "stage sampling parameters out of range");
    }
  }
}

Exemplars load_exemplars(const std::filesystem::path& dir) {
  Exemplars ex{prompts::load_exemplars(dir / "cra.txt"), prompts::load_exemplars(dir / "pg.txt"),
               prompts::load_exemplars(dir / "cg.txt"), prompts::load_exemplars(dir / "cv.txt")};
  auto expect = [](const prompts::ExemplarSet& set, Stage stage) {
    if (set.stage != stage) {
      fail(ErrorCode::InvalidExemplars, fmt::format("{} declares stage {}, expected {}", set.source_path.string(),
                                                    prompts::stage_name(set.stage), prompts::stage_name(stage)));
    }
  };
  expect(ex.cra, Stage::CRA);
  expect(ex.pg, Stage::PG);
  expect(ex.cg, Stage::CG);
  expect(ex.cv, Stage::CV);
  return ex;
}

bool has_absolute_wording(std::string_view text, std::span<const std::string> lexicon) {
  const std::string lower = util::to_lower(text);
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (const auto& term : lexicon) {
    const std::string t = util::to_lower(term);
    if (t.empty()) continue;
    for (std::size_t pos = lower.find(t); pos != std::string::npos; pos = lower.find(t, pos + 1)) {
      bool left = pos == 0 || !is_word(lower[pos - 1]);
      bool right = pos + t.size() == lower.size() || !is_word(lower[pos + t.size()]);
      if (left && right) return true;
    }
  }
  return false;
}

std::vector<std::size_t> candidate_answers(const McqSample& sample, const JobConfig& cfg) {
  std::set<std::size_t> out;
  if (cfg.candidates == CandidateMode::AllIncorrect) {
    for (std::size_t i = 0; i < sample.options.size(); ++i) out.insert(i);
  } else {
    for (auto c : cfg.listed_candidates) {
      if (c < sample.options.size()) out.insert(c);
    }
  }
  out.erase(sample.answer);
  return {out.begin(), out.end()};
}

Json to_json(const JobSummary& s) {
  Json j;
  j["samples"] = s.samples;
  j["annotated"] = s.annotated;
  j["flips"] = s.flips;
  j["counts"] = Json::object();
  for (const auto& [k, v] : s.counts) j["counts"][k] = v;
  return j;
}

std::string render_table(const JobSummary& s) {
  std::size_t width = 10;
  for (const auto& [k, _] : s.counts) width = std::max(width, k.size());
  std::string out;
  out += fmt::format("{:<{}}  {:>6}\n", "samples", width, s.samples);
  out += fmt::format("{:<{}}  {:>6}\n", "annotated", width, s.annotated);
  out += fmt::format("{:<{}}  {:>6}\n", "flips", width, s.flips);
  out += std::string(width + 8, '-') + "\n";
  for (const auto& [k, v] : s.counts) out += fmt::format("{:<{}}  {:>6}\n", k, width, v);
  return out;
}

std::vector<CounterfactualRecord> JobResult::records() const {
  std::vector<CounterfactualRecord> out;
  for (const auto& s : samples) {
    for (const auto& f : s.flips) out.push_back(f.record);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.origin_id, a.new_answer) < std::tie(b.origin_id, b.new_answer);
  });
  return out;
}

SampleCheckpoint::SampleCheckpoint(std::filesystem::path file, std::string sample_id)
    : file_(std::move(file)), sample_id_(std::move(sample_id)) {
  if (!std::filesystem::exists(file_)) return;
  try {
    Json j = Json::parse(util::read_file(file_));
    for (const char* section : {"outcomes", "carried"}) {
      if (!j.contains(section)) continue;
      for (const auto& o : j.at(section)) {
        StageOutcome outcome = outcome_from_json(o);
        if (outcome.responded) cache_.try_emplace(outcome.digest, std::move(outcome));
      }
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::MalformedRecord, fmt::format("checkpoint {} is corrupt: {}", file_.string(), e.what()));
  }
}

std::optional<llm::ChatResponse> SampleCheckpoint::lookup(const std::string& digest) const {
  auto it = cache_.find(digest);
  if (it == cache_.end()) return std::nullopt;
  llm::ChatResponse r;
  r.text = it->second.raw_text;
  r.model_id = it->second.model_id;
  r.timestamp = it->second.timestamp;
  return r;
}

void SampleCheckpoint::append(const StageOutcome& outcome) {
  log_.push_back(outcome);
  if (outcome.responded) cache_.try_emplace(outcome.digest, outcome);
  save();
}

void SampleCheckpoint::save() const {
  if (file_.empty()) return;
  Json j;
  j["sample_id"] = sample_id_;
  j["outcomes"] = Json::array();
  std::set<std::string> logged;
  for (const auto& o : log_) {
    j["outcomes"].push_back(to_json(o));
    logged.insert(o.digest);
  }
  j["carried"] = Json::array();
  for (const auto& [digest, o] : cache_) {
    if (!logged.count(digest)) j["carried"].push_back(to_json(o));
  }
  std::lock_guard lock(checkpoint_write_mutex());
  util::write_file_atomic(file_, dump_pretty(j));
}

Engine::Engine(std::shared_ptr<llm::CompletionBackend> backend, Exemplars exemplars, JobConfig cfg)
    : backend_(std::move(backend)), exemplars_(std::move(exemplars)), cfg_(std::move(cfg)) {
  if (!backend_) fail(ErrorCode::ConfigError, "engine needs a completion backend");
  validate(cfg_);
}

Engine::Call Engine::call(const llm::ChatRequest& req, Stage stage, int attempt, std::optional<std::size_t> flip,
                          SampleCheckpoint& checkpoint) {
  Call c;
  c.outcome.stage = stage;
  c.outcome.attempt = attempt;
  c.outcome.flip = flip;
  c.outcome.digest = llm::request_digest(req);
  c.outcome.model_id = req.model_id;
  if (auto cached = checkpoint.lookup(c.outcome.digest)) {
    c.response = std::move(cached);
  } else {
    try {
      c.response = backend_->complete(req);
    } catch (const Error& e) {
      if (!is_backend_error(e.code())) throw;
      c.outcome.reason = reason(RejectionKind::BackendError, fmt::format("{}: {}", error_code_name(e.code()), e.what()));
      return c;
    }
  }
  c.outcome.responded = true;
  c.outcome.raw_text = c.response->text;
  c.outcome.timestamp = c.response->timestamp;
  if (!c.response->model_id.empty()) c.outcome.model_id = c.response->model_id;
  return c;
}

AnnotationResult Engine::annotate(const McqSample& sample) {
  SampleCheckpoint memory;
  return annotate(sample, memory);
}

AnnotationResult Engine::annotate(const McqSample& sample, SampleCheckpoint& checkpoint) {
  validate(sample);
  AnnotationResult result;
  const int attempts = 1 + cfg_.max_correction_rounds;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::optional<std::size_t> hint;
    if (attempt > 1) hint = sample.answer;
    auto req = prompts::build_cra_prompt(sample, exemplars_.cra, hint, cfg_.cra);
    Call c = call(req, Stage::CRA, attempt, std::nullopt, checkpoint);
    StageOutcome& o = c.outcome;
    if (!o.responded) {
      result.rejection = o.reason;
      checkpoint.append(o);
      result.outcomes.push_back(std::move(o));
      return result;
    }
    try {
      o.parsed = rationale::parse_rationale(o.raw_text, sample.options.size());
      if (o.parsed->predicted == sample.answer) {
        o.accepted = true;
      } else {
        RejectionReason r = reason(RejectionKind::AnnotationDisagreesWithGold);
        r.expected = sample.answer;
        r.predicted = o.parsed->predicted;
        o.reason = r;
      }
    } catch (const Error& e) {
      if (!is_rationale_parse_error(e.code())) throw;
      o.reason = reason(RejectionKind::ParseFailure, fmt::format("{}: {}", error_code_name(e.code()), e.what()));
    }
    checkpoint.append(o);
    result.outcomes.push_back(o);
    if (o.accepted) {
      result.rationale = o.parsed;
      return result;
    }
    result.rejection = o.reason;
  }
  return result;
}

std::vector<FlipResult> Engine::augment(const McqSample& sample, const rationale::Rationale& r) {
  SampleCheckpoint memory;
  return augment(sample, r, memory);
}

std::vector<FlipResult> Engine::augment(const McqSample& sample, const rationale::Rationale& r,
                                        SampleCheckpoint& checkpoint) {
  validate(sample);
  if (r.predicted != sample.answer) {
    fail(ErrorCode::InvalidArgument, fmt::format("sample {}: rationale predicts {} but the gold answer is {}", sample.id,
                                                 rationale::option_tag(r.predicted), rationale::option_tag(sample.answer)));
  }
  if (r.paths.size() != sample.options.size()) {
    fail(ErrorCode::InvalidArgument, fmt::format("sample {}: rationale covers {} options, sample has {}", sample.id,
                                                 r.paths.size(), sample.options.size()));
  }
  std::vector<FlipResult> out;
  for (std::size_t target : candidate_answers(sample, cfg_)) out.push_back(augment_one(sample, r, target, checkpoint));
  return out;
}

FlipResult Engine::augment_one(const McqSample& sample, const rationale::Rationale& r, std::size_t target,
                               SampleCheckpoint& checkpoint) {
  FlipResult fr;
  CounterfactualRecord& rec = fr.record;
  rec.origin_id = sample.id;
  rec.new_answer = target;
  const auto part = rationale::partition_premises(r, sample.answer);
  rec.premises_kept = part.unlinked;

  auto reject = [&](RejectionReason why) {
    rec.status = RecordStatus::Rejected;
    rec.rejection_reason = std::move(why);
    return fr;
  };
  // Logs the outcome and returns the response text, or nullopt after
  // recording a BackendError rejection.
  auto record = [&](Call& c) -> std::optional<std::string> {
    checkpoint.append(c.outcome);
    fr.outcomes.push_back(c.outcome);
    rec.stage_log.push_back(log_entry(c.outcome));
    if (!c.outcome.responded) return std::nullopt;
    return c.outcome.raw_text;
  };

  if (cfg_.skip_absolute_wording && has_absolute_wording(sample.options[target], cfg_.absolute_lexicon)) {
    return reject(reason(RejectionKind::AbsoluteWordingSkip, "option wording is absolute"));
  }

  std::vector<rationale::Premise> linked;
  for (const auto& p : r.premises) {
    if (std::binary_search(part.linked.begin(), part.linked.end(), p.index)) linked.push_back(p);
  }
  auto pg_req = prompts::build_pg_prompt(sample.question, sample.options[sample.answer], linked, sample.options[target],
                                         exemplars_.pg, cfg_.pg);
  Call pg = call(pg_req, Stage::PG, 1, target, checkpoint);
  auto pg_text = record(pg);
  if (!pg_text) return reject(*pg.outcome.reason);
  rec.premises_new = prompts::parse_generated_premises(*pg_text);
  if (rec.premises_new.empty()) return reject(reason(RejectionKind::ParseFailure, "premise generation produced no premises"));

  auto cg_req = prompts::build_cg_prompt(r.premises, sample.context, part.linked, rec.premises_new, exemplars_.cg, cfg_.cg);
  Call cg = call(cg_req, Stage::CG, 1, target, checkpoint);
  auto cg_text = record(cg);
  if (!cg_text) return reject(*cg.outcome.reason);
  rec.new_context = prompts::parse_generated_context(*cg_text);
  if (rec.new_context.empty()) return reject(reason(RejectionKind::ParseFailure, "context generation produced no text"));

  McqSample candidate = sample;
  candidate.context = rec.new_context;
  auto cv_req = prompts::build_cv_prompt(candidate, exemplars_.cv, cfg_.cv);
  Call cv = call(cv_req, Stage::CV, 1, target, checkpoint);
  if (cv.outcome.responded) {
    try {
      cv.outcome.parsed = rationale::parse_rationale(cv.outcome.raw_text, sample.options.size());
      if (cv.outcome.parsed->predicted == target) {
        cv.outcome.accepted = true;
      } else {
        RejectionReason why = reason(RejectionKind::VerificationMismatch);
        why.expected = target;
        why.predicted = cv.outcome.parsed->predicted;
        cv.outcome.reason = why;
      }
    } catch (const Error& e) {
      if (!is_rationale_parse_error(e.code())) throw;
      cv.outcome.reason = reason(RejectionKind::ParseFailure, fmt::format("{}: {}", error_code_name(e.code()), e.what()));
    }
  }
  record(cv);
  if (!cv.outcome.accepted) return reject(*cv.outcome.reason);
  rec.status = RecordStatus::Verified;
  return fr;
}

JobResult Engine::run_job(std::span<const McqSample> samples, const std::filesystem::path& output_dir) {
  return run(samples, output_dir, true);
}

JobResult Engine::run_annotation(std::span<const McqSample> samples, const std::filesystem::path& output_dir) {
  return run(samples, output_dir, false);
}

JobResult Engine::run(std::span<const McqSample> samples, const std::filesystem::path& output_dir, bool augment) {
  std::set<std::string> ids;
  for (const auto& s : samples) {
    validate(s);
    if (!ids.insert(s.id).second) fail(ErrorCode::ConfigError, fmt::format("duplicate sample id \"{}\"", s.id));
  }
  std::filesystem::path checkpoint_dir = cfg_.checkpoint_dir;
  if (checkpoint_dir.empty() && !output_dir.empty()) checkpoint_dir = output_dir / "checkpoints";

  JobResult result;
  result.samples.resize(samples.size());
  parallel_for(samples.size(), cfg_.parallelism, [&](std::size_t i) {
    const McqSample& sample = samples[i];
    SampleCheckpoint checkpoint;
    if (!checkpoint_dir.empty()) {
      checkpoint = SampleCheckpoint(checkpoint_dir / (util::safe_file_stem(sample.id) + ".json"), sample.id);
    }
    SampleResult& sr = result.samples[i];
    sr.sample_id = sample.id;
    sr.annotation = annotate(sample, checkpoint);
    if (!augment || !sr.annotation.rationale) return;
    sr.flips = this->augment(sample, *sr.annotation.rationale, checkpoint);
    const StageLogEntry cra = log_entry(sr.annotation.outcomes.back());
    for (auto& f : sr.flips) f.record.stage_log.insert(f.record.stage_log.begin(), cra);
  });

  JobSummary& sum = result.summary;
  sum.samples = samples.size();
  for (const auto& sr : result.samples) {
    if (sr.annotation.rationale) {
      ++sum.annotated;
    } else if (sr.annotation.rejection) {
      ++sum.counts[std::string(rejection_kind_name(sr.annotation.rejection->kind))];
    }
    for (const auto& f : sr.flips) {
      ++sum.flips;
      if (f.record.status == RecordStatus::Verified) {
        ++sum.counts["Verified"];
      } else if (f.record.rejection_reason) {
        ++sum.counts[std::string(rejection_kind_name(f.record.rejection_reason->kind))];
      }
    }
  }
  write_job_outputs(output_dir, result, augment);
  spdlog::info("job finished: {} samples, {} annotated, {} flips", sum.samples, sum.annotated, sum.flips);
  return result;
}

}  // namespace poda::pipeline
