#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poda {

enum class Source { ReClor, LogiQA2, Synthetic };
enum class Split { Train, Dev, Test, TestEasy, TestHard };

std::string_view source_name(Source s) noexcept;
std::string_view split_name(Split s) noexcept;
// Case-insensitive; accepts "reclor", "logiqa2", "logiqa", "synthetic" and
// "train", "dev", "test", "test-e"/"testeasy", "test-h"/"testhard".
Source parse_source(std::string_view name);
Split parse_split(std::string_view name);

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 26;

// One multiple-choice reading comprehension instance. `answer` is a 0-based
// option index; labels (a), (b), ... are assigned by position.
struct McqSample {
  std::string id;
  Source source = Source::ReClor;
  Split split = Split::Train;
  std::string context;
  std::string question;
  std::vector<std::string> options;
  std::size_t answer = 0;
  std::map<std::string, std::string> meta;

  bool operator==(const McqSample&) const = default;
};

// Throws Error{InvalidArgument}.
void validate(const McqSample& s);

enum class RecordStatus { Unverified, Verified, Rejected };

std::string_view record_status_name(RecordStatus s) noexcept;

enum class RejectionKind {
  ParseFailure,
  AnnotationDisagreesWithGold,
  VerificationMismatch,
  AbsoluteWordingSkip,
  BackendError,
};

std::string_view rejection_kind_name(RejectionKind k) noexcept;

struct RejectionReason {
  RejectionKind kind = RejectionKind::ParseFailure;
  // Set for VerificationMismatch (and AnnotationDisagreesWithGold).
  std::optional<std::size_t> expected;
  std::optional<std::size_t> predicted;
  std::string detail;

  bool operator==(const RejectionReason&) const = default;
};

struct StageLogEntry {
  std::string stage;  // "CRA", "PG", "CG", "CV"
  std::string model_id;
  std::string timestamp;
  std::string digest;  // request digest; ties the entry to a transcript line

  bool operator==(const StageLogEntry&) const = default;
};

struct CounterfactualRecord {
  std::string origin_id;
  std::string new_context;
  std::size_t new_answer = 0;
  std::vector<int> premises_kept;          // 1-based premise indices retained from the original
  std::vector<std::string> premises_new;   // generated premises for the new answer
  std::vector<StageLogEntry> stage_log;
  RecordStatus status = RecordStatus::Unverified;
  std::optional<RejectionReason> rejection_reason;

  bool operator==(const CounterfactualRecord&) const = default;
};

struct SamplePair {
  const McqSample* original = nullptr;
  McqSample counterfactual;
  std::size_t flipped_from = 0;
  std::size_t flipped_to = 0;
};

// Maps source field names onto the internal schema. Each entry lists the
// accepted names in priority order.
struct FieldMap {
  std::vector<std::string> id{"id_string"};
  std::vector<std::string> context{"context"};
  std::vector<std::string> question{"question"};
  std::vector<std::string> options{"answers"};
  std::vector<std::string> label{"label"};
};

FieldMap default_field_map(Source source);

// Reads a line-delimited JSON dataset file. Blank lines are skipped.
// Errors: UnreadablePath, MalformedRecord (message carries the 1-based
// record ordinal).
std::vector<McqSample> load_dataset(const std::filesystem::path& path, Source source, Split split);
std::vector<McqSample> load_dataset(const std::filesystem::path& path, Source source, Split split,
                                    const FieldMap& fields);

// Writes samples back in the source schema (ReClor field names).
void save_dataset(const std::filesystem::path& path, std::span<const McqSample> samples);

inline constexpr int kRecordSchemaVersion = 1;

// Counterfactual store: one JSON object per line, each carrying
// "schema_version". Written atomically.
void save_records(const std::filesystem::path& path, std::span<const CounterfactualRecord> records);
// Errors: UnreadablePath, SchemaVersionMismatch, MalformedRecord.
std::vector<CounterfactualRecord> load_records(const std::filesystem::path& path);

// Synthetic sample: the original with its context replaced and the answer
// flipped. id is "<origin>#cf-<label>", meta.origin_id references the original.
McqSample materialize(const McqSample& original, const CounterfactualRecord& record);

// One pair per Verified record, ordered by (origin_id, new_answer).
// Unverified and Rejected records are skipped. Errors: DanglingOrigin.
// The returned pairs point into `originals`.
std::vector<SamplePair> pair_samples(std::span<const McqSample> originals,
                                     std::span<const CounterfactualRecord> counterfactuals);

}  // namespace poda
