#pragma once

// Accuracy and judge-based quality evaluation over a completion backend.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poda/dataset.hpp"
#include "poda/llm_client.hpp"
#include "poda/prompts.hpp"
#include "poda/serialization.hpp"

namespace poda::eval {

// Canonical final-answer sentence first, otherwise a single standalone
// "(x)" on the last non-empty line. nullopt when neither yields a label.
std::optional<std::size_t> extract_label(std::string_view reply, std::size_t n_options);

struct SplitCounts {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  bool operator==(const SplitCounts&) const = default;
};

struct AccuracyRecord {
  std::string id;
  Split split = Split::Test;
  std::size_t gold = 0;
  std::optional<std::size_t> predicted;
  std::string answer_line;  // last non-empty line of the reply
  bool correct = false;
  std::string error;  // backend or extraction problem

  bool operator==(const AccuracyRecord&) const = default;
};

struct AccuracyReport {
  std::string model_id;
  std::size_t k = 0;
  std::map<std::string, SplitCounts> splits;  // keyed by split name
  SplitCounts overall;
  std::size_t extraction_failures = 0;
  std::vector<AccuracyRecord> records;  // input order

  bool operator==(const AccuracyReport&) const = default;
};

// One greedy completion per sample over the first k shots. Backend errors
// and unextractable replies count as incorrect extraction failures.
// Errors: InvalidArgument when shots hold fewer than k demonstrations.
AccuracyReport evaluate_accuracy(std::span<const McqSample> samples, const prompts::ExemplarSet& shots,
                                 llm::CompletionBackend& backend, std::size_t k, const prompts::Sampling& sampling,
                                 int parallelism = 1);

Json to_json(const AccuracyReport& r);
std::string render_table(const AccuracyReport& r);

struct QualityItem {
  std::string id;
  prompts::RubricPayload payload;
};

struct QualityScore {
  std::string item_id;
  std::string metric;
  std::optional<int> score;
  std::string error;  // "UnparseableScore" or a backend error

  bool operator==(const QualityScore&) const = default;
};

struct MetricSummary {
  std::string metric;
  std::optional<double> mean;  // nullopt when no item produced a score
  std::size_t scored = 0;
  std::size_t unparseable = 0;
  std::size_t failed = 0;  // backend errors

  bool operator==(const MetricSummary&) const = default;
};

struct QualityReport {
  std::string method;
  std::string judge_model;
  std::size_t n_items = 0;
  std::vector<MetricSummary> metrics;  // spec order
  std::optional<double> overall;       // mean of the metric means
  std::vector<QualityScore> scores;    // item-major, spec order within an item

  bool operator==(const QualityReport&) const = default;
};

// One judge call per (item, spec). Errors: InvalidArgument when there are
// no items or no specs; PayloadMismatch when an item lacks a needed text.
QualityReport evaluate_quality(std::span<const QualityItem> items, std::span<const prompts::RubricSpec> specs,
                               llm::CompletionBackend& backend, const prompts::Sampling& judge,
                               std::string method = "PODA", int parallelism = 1);

Json to_json(const QualityReport& r);
std::string render_table(const QualityReport& r);

// `count` distinct indices out of [0, n) by a partial Fisher-Yates shuffle
// driven by mt19937_64(seed), returned ascending. count >= n keeps all.
std::vector<std::size_t> seeded_subsample(std::size_t n, std::size_t count, std::uint64_t seed);

}  // namespace poda::eval
