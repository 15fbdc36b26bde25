#include "poda/eval.hpp"

#include <algorithm>
#include <random>
#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "poda/error.hpp"
#include "poda/parallel.hpp"
#include "poda/rationale.hpp"
#include "poda/util.hpp"

namespace poda::eval {
namespace {

std::string last_line(std::string_view text) {
  auto lines = util::split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    auto t = util::trim(*it);
    if (!t.empty()) return std::string(t);
  }
  return {};
}

std::string fmt_mean(const std::optional<double>& m) { return m ? fmt::format("{:.2f}", *m) : "n/a"; }

}  // namespace

std::optional<std::size_t> extract_label(std::string_view reply, std::size_t n_options) {
  try {
    if (auto label = rationale::find_final_answer(reply, n_options)) return label;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::AmbiguousFinalAnswer) return std::nullopt;
    throw;
  }
  static const std::regex tag(R"(\(\s*([A-Za-z])\s*\))");
  const std::string line = last_line(reply);
  std::optional<std::size_t> found;
  for (std::sregex_iterator it(line.begin(), line.end(), tag), end; it != end; ++it) {
    auto idx = rationale::label_index((*it)[1].str()[0]);
    if (!idx || *idx >= n_options) continue;
    if (found && *found != *idx) return std::nullopt;
    found = idx;
  }
  return found;
}

AccuracyReport evaluate_accuracy(std::span<const McqSample> samples, const prompts::ExemplarSet& shots,
                                 llm::CompletionBackend& backend, std::size_t k, const prompts::Sampling& sampling,
                                 int parallelism) {
  if (shots.shots.size() < k) {
    fail(ErrorCode::InvalidArgument, fmt::format("{} shots requested but only {} available", k, shots.shots.size()));
  }
  for (const auto& s : samples) validate(s);
  AccuracyReport report;
  report.model_id = sampling.model_id;
  report.k = k;
  report.records.resize(samples.size());
  parallel_for(samples.size(), parallelism, [&](std::size_t i) {
    const McqSample& s = samples[i];
    AccuracyRecord& rec = report.records[i];
    rec.id = s.id;
    rec.split = s.split;
    rec.gold = s.answer;
    try {
      const auto reply = backend.complete(prompts::build_eval_prompt(s, shots, k, sampling));
      rec.answer_line = last_line(reply.text);
      rec.predicted = extract_label(reply.text, s.options.size());
      if (!rec.predicted) rec.error = "no extractable answer label";
    } catch (const Error& e) {
      if (!is_backend_error(e.code())) throw;
      rec.error = fmt::format("{}: {}", error_code_name(e.code()), e.what());
    }
    rec.correct = rec.predicted && *rec.predicted == s.answer;
  });
  for (const auto& rec : report.records) {
    auto& split = report.splits[std::string(split_name(rec.split))];
    ++split.total;
    ++report.overall.total;
    if (rec.correct) {
      ++split.correct;
      ++report.overall.correct;
    }
    if (!rec.predicted) ++report.extraction_failures;
  }
  return report;
}

Json to_json(const AccuracyReport& r) {
  auto counts = [](const SplitCounts& c) {
    Json j;
    j["correct"] = c.correct;
    j["total"] = c.total;
    j["accuracy"] = c.accuracy();
    return j;
  };
  Json j;
  j["model_id"] = r.model_id;
  j["k"] = r.k;
  j["overall"] = counts(r.overall);
  j["splits"] = Json::object();
  for (const auto& [name, c] : r.splits) j["splits"][name] = counts(c);
  j["extraction_failures"] = r.extraction_failures;
  j["records"] = Json::array();
  for (const auto& rec : r.records) {
    Json e;
    e["id"] = rec.id;
    e["split"] = split_name(rec.split);
    e["gold"] = rationale::option_tag(rec.gold);
    e["predicted"] = rec.predicted ? Json(rationale::option_tag(*rec.predicted)) : Json(nullptr);
    e["correct"] = rec.correct;
    e["answer_line"] = rec.answer_line;
    if (!rec.error.empty()) e["error"] = rec.error;
    j["records"].push_back(std::move(e));
  }
  return j;
}

std::string render_table(const AccuracyReport& r) {
  std::string out = fmt::format("model {}  k={}\n", r.model_id, r.k);
  out += fmt::format("{:<10}  {:>7}  {:>7}  {:>8}\n", "split", "correct", "total", "accuracy");
  auto row = [&](const std::string& name, const SplitCounts& c) {
    out += fmt::format("{:<10}  {:>7}  {:>7}  {:>7.2f}%\n", name, c.correct, c.total, 100.0 * c.accuracy());
  };
  for (const auto& [name, c] : r.splits) row(name, c);
  row("Overall", r.overall);
  out += fmt::format("extraction failures: {}\n", r.extraction_failures);
  return out;
}

QualityReport evaluate_quality(std::span<const QualityItem> items, std::span<const prompts::RubricSpec> specs,
                               llm::CompletionBackend& backend, const prompts::Sampling& judge, std::string method,
                               int parallelism) {
  if (items.empty()) fail(ErrorCode::InvalidArgument, "quality evaluation needs at least one item");
  if (specs.empty()) fail(ErrorCode::InvalidArgument, "quality evaluation needs at least one rubric");
  // build every prompt up front so payload problems surface before any call
  std::vector<llm::ChatRequest> requests;
  requests.reserve(items.size() * specs.size());
  for (const auto& item : items) {
    for (const auto& spec : specs) {
      try {
        requests.push_back(prompts::build_rubric_prompt(spec, item.payload, judge));
      } catch (const Error& e) {
        fail(e.code(), fmt::format("item {}: {}", item.id, e.what()));
      }
    }
  }

  QualityReport report;
  report.method = std::move(method);
  report.judge_model = judge.model_id;
  report.n_items = items.size();
  report.scores.resize(requests.size());
  parallel_for(requests.size(), parallelism, [&](std::size_t i) {
    QualityScore& sc = report.scores[i];
    sc.item_id = items[i / specs.size()].id;
    sc.metric = std::string(prompts::rubric_metric_name(specs[i % specs.size()].metric));
    try {
      const auto reply = backend.complete(requests[i]);
      sc.score = prompts::extract_score(reply.text);
      if (!sc.score) sc.error = std::string(error_code_name(ErrorCode::UnparseableScore));
    } catch (const Error& e) {
      if (!is_backend_error(e.code())) throw;
      sc.error = fmt::format("{}: {}", error_code_name(e.code()), e.what());
    }
  });

  std::vector<long long> sums(specs.size(), 0);
  report.metrics.resize(specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) report.metrics[m].metric = prompts::rubric_metric_name(specs[m].metric);
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    const auto& sc = report.scores[i];
    auto& ms = report.metrics[i % specs.size()];
    if (sc.score) {
      sums[i % specs.size()] += *sc.score;
      ++ms.scored;
    } else if (sc.error == error_code_name(ErrorCode::UnparseableScore)) {
      ++ms.unparseable;
    } else {
      ++ms.failed;
    }
  }
  double total = 0;
  std::size_t with_mean = 0;
  std::size_t unparseable = 0;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    auto& ms = report.metrics[m];
    unparseable += ms.unparseable;
    if (ms.scored) {
      ms.mean = static_cast<double>(sums[m]) / static_cast<double>(ms.scored);
      total += *ms.mean;
      ++with_mean;
    }
  }
  if (with_mean) report.overall = total / static_cast<double>(with_mean);
  if (unparseable) spdlog::warn("{} judge replies had no parseable score and were excluded", unparseable);
  return report;
}

Json to_json(const QualityReport& r) {
  Json j;
  j["method"] = r.method;
  j["judge_model"] = r.judge_model;
  j["n_items"] = r.n_items;
  j["metrics"] = Json::array();
  for (const auto& m : r.metrics) {
    Json e;
    e["metric"] = m.metric;
    e["mean"] = m.mean ? Json(*m.mean) : Json(nullptr);
    e["scored"] = m.scored;
    e["unparseable"] = m.unparseable;
    e["failed"] = m.failed;
    j["metrics"].push_back(std::move(e));
  }
  j["overall"] = r.overall ? Json(*r.overall) : Json(nullptr);
  j["scores"] = Json::array();
  for (const auto& s : r.scores) {
    Json e;
    e["item"] = s.item_id;
    e["metric"] = s.metric;
    e["score"] = s.score ? Json(*s.score) : Json(nullptr);
    if (!s.error.empty()) e["error"] = s.error;
    j["scores"].push_back(std::move(e));
  }
  return j;
}

std::string render_table(const QualityReport& r) {
  std::string header = fmt::format("{:<10}", "Method");
  std::string row = fmt::format("{:<10}", r.method);
  for (const auto& m : r.metrics) {
    const std::size_t w = std::max<std::size_t>(m.metric.size(), 5);
    header += fmt::format("  {:>{}}", m.metric, w);
    row += fmt::format("  {:>{}}", fmt_mean(m.mean), w);
  }
  header += fmt::format("  {:>7}\n", "Overall");
  row += fmt::format("  {:>7}\n", fmt_mean(r.overall));
  std::size_t unparseable = 0, failed = 0;
  for (const auto& m : r.metrics) {
    unparseable += m.unparseable;
    failed += m.failed;
  }
  return header + row +
         fmt::format("judge {}  items {}  unparseable {}  failed {}\n", r.judge_model, r.n_items, unparseable, failed);
}

std::vector<std::size_t> seeded_subsample(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (count >= n) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    // unbiased draw from [0, n - i) by rejection
    const std::uint64_t range = n - i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    std::swap(idx[i], idx[i + x % range]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace poda::eval
