#include "poda/dataset.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/rationale.hpp"
#include "poda/serialization.hpp"
#include "poda/util.hpp"

namespace poda {
namespace {

const Json* find_field(const Json& obj, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    auto it = obj.find(name);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

[[noreturn]] void malformed(std::size_t ordinal, const std::string& what) {
  fail(ErrorCode::MalformedRecord, fmt::format("record {}: {}", ordinal, what));
}

std::string require_string(const Json& obj, const std::vector<std::string>& names, std::size_t ordinal,
                           bool allow_number = false) {
  const Json* v = find_field(obj, names);
  if (!v) malformed(ordinal, fmt::format("missing field \"{}\"", names.front()));
  if (v->is_string()) return v->get<std::string>();
  if (allow_number && v->is_number_integer()) return std::to_string(v->get<long long>());
  malformed(ordinal, fmt::format("field \"{}\" is not a string", names.front()));
}

}  // namespace

std::string_view source_name(Source s) noexcept {
  switch (s) {
    case Source::ReClor: return "ReClor";
    case Source::LogiQA2: return "LogiQA2";
    case Source::Synthetic: return "Synthetic";
  }
  return "ReClor";
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "Train";
    case Split::Dev: return "Dev";
    case Split::Test: return "Test";
    case Split::TestEasy: return "TestEasy";
    case Split::TestHard: return "TestHard";
  }
  return "Train";
}

Source parse_source(std::string_view name) {
  std::string n = util::to_lower(name);
  if (n == "reclor") return Source::ReClor;
  if (n == "logiqa2" || n == "logiqa" || n == "logiqa 2.0" || n == "logiqa2.0") return Source::LogiQA2;
  if (n == "synthetic") return Source::Synthetic;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown source \"{}\"", name));
}

Split parse_split(std::string_view name) {
  std::string n = util::to_lower(name);
  if (n == "train") return Split::Train;
  if (n == "dev" || n == "val") return Split::Dev;
  if (n == "test") return Split::Test;
  if (n == "testeasy" || n == "test-e" || n == "test_e") return Split::TestEasy;
  if (n == "testhard" || n == "test-h" || n == "test_h") return Split::TestHard;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown split \"{}\"", name));
}

std::string_view record_status_name(RecordStatus s) noexcept {
  switch (s) {
    case RecordStatus::Unverified: return "Unverified";
    case RecordStatus::Verified: return "Verified";
    case RecordStatus::Rejected: return "Rejected";
  }
  return "Unverified";
}

std::string_view rejection_kind_name(RejectionKind k) noexcept {
  switch (k) {
    case RejectionKind::ParseFailure: return "ParseFailure";
    case RejectionKind::AnnotationDisagreesWithGold: return "AnnotationDisagreesWithGold";
    case RejectionKind::VerificationMismatch: return "VerificationMismatch";
    case RejectionKind::AbsoluteWordingSkip: return "AbsoluteWordingSkip";
    case RejectionKind::BackendError: return "BackendError";
  }
  return "ParseFailure";
}

void validate(const McqSample& s) {
  if (s.options.size() < kMinOptions || s.options.size() > kMaxOptions) {
    fail(ErrorCode::InvalidArgument, fmt::format("sample {}: {} options, expected 2..26", s.id, s.options.size()));
  }
  if (s.answer >= s.options.size()) {
    fail(ErrorCode::InvalidArgument, fmt::format("sample {}: answer {} out of range", s.id, s.answer));
  }
}

FieldMap default_field_map(Source source) {
  FieldMap m;
  if (source == Source::LogiQA2) {
    m.id = {"id_string", "id"};
    m.context = {"context", "text"};
    m.options = {"answers", "options"};
    m.label = {"label", "answer"};
  }
  return m;
}

std::vector<McqSample> load_dataset(const std::filesystem::path& path, Source source, Split split) {
  return load_dataset(path, source, split, default_field_map(source));
}

std::vector<McqSample> load_dataset(const std::filesystem::path& path, Source source, Split split,
                                    const FieldMap& fields) {
  const std::string text = util::read_file(path);
  std::vector<McqSample> out;
  std::set<std::string> seen;
  std::size_t ordinal = 0;
  for (const auto& line : util::split_lines(text)) {
    if (util::trim(line).empty()) continue;
    ++ordinal;
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      malformed(ordinal, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) malformed(ordinal, "not a JSON object");

    McqSample s;
    s.source = source;
    s.split = split;
    s.id = require_string(obj, fields.id, ordinal, true);
    s.context = require_string(obj, fields.context, ordinal);
    s.question = require_string(obj, fields.question, ordinal);

    const Json* opts = find_field(obj, fields.options);
    if (!opts || !opts->is_array()) malformed(ordinal, fmt::format("missing array field \"{}\"", fields.options.front()));
    for (const auto& o : *opts) {
      if (!o.is_string()) malformed(ordinal, "option is not a string");
      s.options.push_back(o.get<std::string>());
    }
    if (s.options.size() < kMinOptions || s.options.size() > kMaxOptions) {
      malformed(ordinal, fmt::format("{} options, expected 2..26", s.options.size()));
    }

    const Json* label = find_field(obj, fields.label);
    if (!label || !label->is_number_integer()) malformed(ordinal, fmt::format("missing integer field \"{}\"", fields.label.front()));
    long long answer = label->get<long long>();
    if (answer < 0 || static_cast<std::size_t>(answer) >= s.options.size()) {
      malformed(ordinal, fmt::format("answer {} out of range for {} options", answer, s.options.size()));
    }
    s.answer = static_cast<std::size_t>(answer);

    if (!seen.insert(s.id).second) malformed(ordinal, fmt::format("duplicate id \"{}\"", s.id));
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const McqSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    Json j;
    j["id_string"] = s.id;
    j["context"] = s.context;
    j["question"] = s.question;
    j["answers"] = s.options;
    j["label"] = s.answer;
    out += dump_line(j);
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

void save_records(const std::filesystem::path& path, std::span<const CounterfactualRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += dump_line(to_json(r));
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

std::vector<CounterfactualRecord> load_records(const std::filesystem::path& path) {
  const std::string text = util::read_file(path);
  std::vector<CounterfactualRecord> out;
  std::size_t ordinal = 0;
  for (const auto& line : util::split_lines(text)) {
    if (util::trim(line).empty()) continue;
    ++ordinal;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      malformed(ordinal, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
      fail(ErrorCode::SchemaVersionMismatch, fmt::format("record {}: missing schema_version", ordinal));
    }
    int version = j["schema_version"].get<int>();
    if (version != kRecordSchemaVersion) {
      fail(ErrorCode::SchemaVersionMismatch,
           fmt::format("record {}: schema_version {} (supported: {})", ordinal, version, kRecordSchemaVersion));
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const Json::exception& e) {
      malformed(ordinal, e.what());
    }
  }
  return out;
}

McqSample materialize(const McqSample& original, const CounterfactualRecord& record) {
  if (record.new_answer >= original.options.size() || record.new_answer == original.answer) {
    fail(ErrorCode::InvalidArgument,
         fmt::format("record for {} has an invalid new answer {}", record.origin_id, record.new_answer));
  }
  McqSample s = original;
  s.id = fmt::format("{}#cf-{}", original.id, rationale::option_label(record.new_answer));
  s.source = Source::Synthetic;
  s.context = record.new_context;
  s.answer = record.new_answer;
  s.meta["origin_id"] = original.id;
  return s;
}

std::vector<SamplePair> pair_samples(std::span<const McqSample> originals,
                                     std::span<const CounterfactualRecord> counterfactuals) {
  std::unordered_map<std::string, const McqSample*> by_id;
  for (const auto& s : originals) by_id.emplace(s.id, &s);

  std::vector<const CounterfactualRecord*> verified;
  for (const auto& r : counterfactuals) {
    if (r.status != RecordStatus::Verified) continue;
    if (!by_id.count(r.origin_id)) {
      fail(ErrorCode::DanglingOrigin, fmt::format("verified record references unknown origin \"{}\"", r.origin_id));
    }
    verified.push_back(&r);
  }
  std::stable_sort(verified.begin(), verified.end(), [](const auto* a, const auto* b) {
    return std::tie(a->origin_id, a->new_answer) < std::tie(b->origin_id, b->new_answer);
  });

  std::vector<SamplePair> pairs;
  pairs.reserve(verified.size());
  for (const auto* r : verified) {
    const McqSample* original = by_id.at(r->origin_id);
    pairs.push_back({original, materialize(*original, *r), original->answer, r->new_answer});
  }
  return pairs;
}

}  // namespace poda
