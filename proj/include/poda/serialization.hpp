#pragma once

// JSON codecs shared by the record store, checkpoints and reports.

#include <json.hpp>

#include "poda/dataset.hpp"
#include "poda/rationale.hpp"

namespace poda {

using Json = nlohmann::ordered_json;

// Compact single-line rendering with raw UTF-8 (no \u escapes).
std::string dump_line(const Json& j);
// Two-space indented rendering with raw UTF-8 and a trailing newline.
std::string dump_pretty(const Json& j);

Json to_json(const McqSample& s);
McqSample sample_from_json(const Json& j);

Json to_json(const RejectionReason& r);
RejectionReason rejection_from_json(const Json& j);

Json to_json(const StageLogEntry& e);
StageLogEntry stage_log_from_json(const Json& j);

Json to_json(const CounterfactualRecord& r);
CounterfactualRecord record_from_json(const Json& j);

Json to_json(const rationale::Rationale& r);
rationale::Rationale rationale_from_json(const Json& j);

}  // namespace poda
