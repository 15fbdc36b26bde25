#include "poda/serialization.hpp"

#include "poda/error.hpp"

namespace poda {
namespace {

RecordStatus parse_status(const std::string& s) {
  if (s == "Unverified") return RecordStatus::Unverified;
  if (s == "Verified") return RecordStatus::Verified;
  if (s == "Rejected") return RecordStatus::Rejected;
  fail(ErrorCode::MalformedRecord, "unknown record status " + s);
}

RejectionKind parse_rejection_kind(const std::string& s) {
  for (auto k : {RejectionKind::ParseFailure, RejectionKind::AnnotationDisagreesWithGold,
                 RejectionKind::VerificationMismatch, RejectionKind::AbsoluteWordingSkip,
                 RejectionKind::BackendError}) {
    if (rejection_kind_name(k) == s) return k;
  }
  fail(ErrorCode::MalformedRecord, "unknown rejection kind " + s);
}

rationale::RelationKind parse_relation_kind(const std::string& s) {
  using rationale::RelationKind;
  for (auto k : {RelationKind::Supported, RelationKind::Contradicted, RelationKind::Unrelated}) {
    if (rationale::relation_kind_name(k) == s) return k;
  }
  fail(ErrorCode::MalformedRecord, "unknown relation kind " + s);
}

}  // namespace

std::string dump_line(const Json& j) { return j.dump(-1, ' ', false); }

std::string dump_pretty(const Json& j) { return j.dump(2, ' ', false) + "\n"; }

Json to_json(const McqSample& s) {
  Json j;
  j["id"] = s.id;
  j["source"] = source_name(s.source);
  j["split"] = split_name(s.split);
  j["context"] = s.context;
  j["question"] = s.question;
  j["options"] = s.options;
  j["answer"] = s.answer;
  j["meta"] = Json::object();
  for (const auto& [k, v] : s.meta) j["meta"][k] = v;
  return j;
}

McqSample sample_from_json(const Json& j) {
  McqSample s;
  s.id = j.at("id").get<std::string>();
  s.source = parse_source(j.at("source").get<std::string>());
  s.split = parse_split(j.at("split").get<std::string>());
  s.context = j.at("context").get<std::string>();
  s.question = j.at("question").get<std::string>();
  s.options = j.at("options").get<std::vector<std::string>>();
  s.answer = j.at("answer").get<std::size_t>();
  if (j.contains("meta")) {
    for (const auto& [k, v] : j.at("meta").items()) s.meta[k] = v.get<std::string>();
  }
  return s;
}

Json to_json(const RejectionReason& r) {
  Json j;
  j["kind"] = rejection_kind_name(r.kind);
  if (r.expected) j["expected"] = *r.expected;
  if (r.predicted) j["predicted"] = *r.predicted;
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

RejectionReason rejection_from_json(const Json& j) {
  RejectionReason r;
  r.kind = parse_rejection_kind(j.at("kind").get<std::string>());
  if (j.contains("expected")) r.expected = j.at("expected").get<std::size_t>();
  if (j.contains("predicted")) r.predicted = j.at("predicted").get<std::size_t>();
  if (j.contains("detail")) r.detail = j.at("detail").get<std::string>();
  return r;
}

Json to_json(const StageLogEntry& e) {
  return Json{{"stage", e.stage}, {"model_id", e.model_id}, {"timestamp", e.timestamp}, {"digest", e.digest}};
}

StageLogEntry stage_log_from_json(const Json& j) {
  return {j.at("stage").get<std::string>(), j.at("model_id").get<std::string>(),
          j.at("timestamp").get<std::string>(), j.value("digest", std::string{})};
}

Json to_json(const CounterfactualRecord& r) {
  Json j;
  j["schema_version"] = kRecordSchemaVersion;
  j["origin_id"] = r.origin_id;
  j["new_context"] = r.new_context;
  j["new_answer"] = r.new_answer;
  j["premises_kept"] = r.premises_kept;
  j["premises_new"] = r.premises_new;
  j["stage_log"] = Json::array();
  for (const auto& e : r.stage_log) j["stage_log"].push_back(to_json(e));
  j["status"] = record_status_name(r.status);
  if (r.rejection_reason) j["rejection_reason"] = to_json(*r.rejection_reason);
  return j;
}

CounterfactualRecord record_from_json(const Json& j) {
  CounterfactualRecord r;
  r.origin_id = j.at("origin_id").get<std::string>();
  r.new_context = j.at("new_context").get<std::string>();
  r.new_answer = j.at("new_answer").get<std::size_t>();
  r.premises_kept = j.at("premises_kept").get<std::vector<int>>();
  r.premises_new = j.at("premises_new").get<std::vector<std::string>>();
  for (const auto& e : j.at("stage_log")) r.stage_log.push_back(stage_log_from_json(e));
  r.status = parse_status(j.at("status").get<std::string>());
  if (j.contains("rejection_reason")) r.rejection_reason = rejection_from_json(j.at("rejection_reason"));
  return r;
}

Json to_json(const rationale::Rationale& r) {
  Json j;
  j["premises"] = Json::array();
  for (const auto& p : r.premises) j["premises"].push_back({{"index", p.index}, {"text", p.text}});
  j["paths"] = Json::array();
  for (const auto& path : r.paths) {
    j["paths"].push_back({{"option", path.option},
                          {"reasoning", path.reasoning},
                          {"relation", rationale::relation_kind_name(path.relation.kind)},
                          {"refs", path.relation.refs}});
  }
  j["conclusion"] = r.conclusion;
  j["predicted"] = r.predicted;
  return j;
}

rationale::Rationale rationale_from_json(const Json& j) {
  rationale::Rationale r;
  for (const auto& p : j.at("premises")) r.premises.push_back({p.at("index").get<int>(), p.at("text").get<std::string>()});
  for (const auto& p : j.at("paths")) {
    rationale::ThoughtPath path;
    path.option = p.at("option").get<std::size_t>();
    path.reasoning = p.at("reasoning").get<std::string>();
    path.relation.kind = parse_relation_kind(p.at("relation").get<std::string>());
    path.relation.refs = p.at("refs").get<std::vector<int>>();
    r.paths.push_back(std::move(path));
  }
  r.conclusion = j.at("conclusion").get<std::string>();
  r.predicted = j.at("predicted").get<std::size_t>();
  return r;
}

}  // namespace poda
