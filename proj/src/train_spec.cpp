#include "poda/train_spec.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/util.hpp"

namespace poda::eval {
namespace {

struct Field {
  std::string key;
  std::function<std::string(const TrainSpec&)> get;
  std::function<void(TrainSpec&, std::string_view)> set;
};

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  fail(ErrorCode::InvalidOverride, fmt::format("{}: \"{}\" is not {}", key, value, want));
}

int to_int(std::string_view key, std::string_view v, int min) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || out < min) bad_value(key, v, fmt::format("an integer >= {}", min));
  return out;
}

double to_double(std::string_view key, std::string_view v, double min, bool strict) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out) || out < min || (strict && out == min)) {
    bad_value(key, v, fmt::format("a number {} {}", strict ? ">" : ">=", min));
  }
  return out;
}

std::string to_text(std::string_view key, std::string_view v) {
  if (v.empty() || v.find('\n') != std::string_view::npos) bad_value(key, v, "a non-empty single-line value");
  return std::string(v);
}

std::string num(double x) { return fmt::format("{}", x); }

template <typename M>
Field int_field(std::string key, M member, int min) {
  return {key, [member](const TrainSpec& s) { return std::to_string(member(const_cast<TrainSpec&>(s))); },
          [member, key, min](TrainSpec& s, std::string_view v) { member(s) = to_int(key, v, min); }};
}

template <typename M>
Field real_field(std::string key, M member, double min, bool strict) {
  return {key, [member](const TrainSpec& s) { return num(member(const_cast<TrainSpec&>(s))); },
          [member, key, min, strict](TrainSpec& s, std::string_view v) { member(s) = to_double(key, v, min, strict); }};
}

template <typename M>
Field text_field(std::string key, M member) {
  return {key, [member](const TrainSpec& s) { return member(const_cast<TrainSpec&>(s)); },
          [member, key](TrainSpec& s, std::string_view v) { member(s) = to_text(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"dataset", [](const TrainSpec& s) { return std::string(train_dataset_name(s.dataset)); },
       [](TrainSpec& s, std::string_view v) { s.dataset = parse_train_dataset(v); }},
      text_field("stage1.objective", [](TrainSpec& s) -> std::string& { return s.stage1.objective; }),
      text_field("stage1.data", [](TrainSpec& s) -> std::string& { return s.stage1.data; }),
      int_field("stage1.epochs", [](TrainSpec& s) -> int& { return s.stage1.epochs; }, 1),
      real_field("stage1.learning_rate", [](TrainSpec& s) -> double& { return s.stage1.learning_rate; }, 0.0, true),
      text_field("stage2.objective", [](TrainSpec& s) -> std::string& { return s.stage2.objective; }),
      text_field("stage2.data", [](TrainSpec& s) -> std::string& { return s.stage2.data; }),
      int_field("stage2.epochs", [](TrainSpec& s) -> int& { return s.stage2.epochs; }, 1),
      real_field("stage2.learning_rate", [](TrainSpec& s) -> double& { return s.stage2.learning_rate; }, 0.0, true),
      real_field("stage2.tau", [](TrainSpec& s) -> double& { return s.tau; }, 0.0, true),
      real_field("stage2.tpcl_weight", [](TrainSpec& s) -> double& { return s.tpcl_weight; }, 0.0, false),
      int_field("batch_size", [](TrainSpec& s) -> int& { return s.batch_size; }, 1),
      int_field("max_seq_len", [](TrainSpec& s) -> int& { return s.max_seq_len; }, 1),
      int_field("lora.rank", [](TrainSpec& s) -> int& { return s.lora.rank; }, 1),
      int_field("lora.alpha", [](TrainSpec& s) -> int& { return s.lora.alpha; }, 1),
      real_field("lora.dropout", [](TrainSpec& s) -> double& { return s.lora.dropout; }, 0.0, false),
      text_field("lora.target_modules", [](TrainSpec& s) -> std::string& { return s.lora.target_modules; }),
      text_field("optimizer", [](TrainSpec& s) -> std::string& { return s.optimizer; }),
      real_field("warmup_ratio", [](TrainSpec& s) -> double& { return s.warmup_ratio; }, 0.0, false),
      real_field("eval.temperature", [](TrainSpec& s) -> double& { return s.eval_temperature; }, 0.0, false),
      text_field("template", [](TrainSpec& s) -> std::string& { return s.prompt_template; }),
      int_field("num_seeds", [](TrainSpec& s) -> int& { return s.num_seeds; }, 1),
  };
  return f;
}

const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> a = {
      {"epochs", "stage1.epochs"}, {"lr", "stage1.learning_rate"}, {"tau", "stage2.tau"}};
  return a;
}

const Field& field(std::string_view key) {
  std::string k(key);
  if (auto it = aliases().find(k); it != aliases().end()) k = it->second;
  for (const auto& f : fields()) {
    if (f.key == k) return f;
  }
  fail(ErrorCode::InvalidOverride, fmt::format("unknown training key \"{}\"", key));
}

// Comment emitted before the named key.
const std::map<std::string, std::string>& comments() {
  static const std::map<std::string, std::string> c = {
      {"dataset", "# Two-stage fine-tuning plan with LoRA adapters."},
      {"stage1.objective", "\n# Stage 1: supervised fine-tuning on every sample (original and counterfactual)."},
      {"stage2.objective",
       "\n# Stage 2: contrastive thought-path loss plus SFT on original/counterfactual pairs.\n"
       "# loss = tpcl_weight * L_tpcl + L_sft; tau divides the cosine rewards."},
      {"batch_size", "\n# Shared settings. batch_size may be reached with gradient accumulation."},
      {"lora.rank", "\n# Adapters on the attention and MLP projections."},
      {"optimizer", "\n# Optimizer and schedule."},
      {"eval.temperature", "\n# Evaluation decodes greedily; results averaged over num_seeds runs."},
  };
  return c;
}

}  // namespace

std::string_view train_dataset_name(TrainDataset d) noexcept { return d == TrainDataset::ReClor ? "reclor" : "logiqa2"; }

TrainDataset parse_train_dataset(std::string_view name) {
  const std::string n = util::to_lower(util::trim(name));
  if (n == "reclor") return TrainDataset::ReClor;
  if (n == "logiqa2" || n == "logiqa" || n == "logiqa2.0") return TrainDataset::LogiQA2;
  fail(ErrorCode::InvalidOverride, fmt::format("unknown dataset \"{}\"", name));
}

TrainSpec default_train_spec(TrainDataset d) {
  TrainSpec s;
  s.dataset = d;
  s.stage1 = {"sft", "all_samples", 2, d == TrainDataset::ReClor ? 2e-4 : 1e-4};
  s.stage2 = {"tpcl+sft", "sample_pairs", 1, 1e-6};
  s.lora.alpha = d == TrainDataset::ReClor ? 64 : 32;
  return s;
}

std::vector<std::string> train_spec_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void apply_override(TrainSpec& spec, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorCode::InvalidOverride, fmt::format("override \"{}\" is not key=value", assignment));
  }
  const auto key = util::trim(assignment.substr(0, eq));
  const auto value = util::trim(assignment.substr(eq + 1));
  field(key).set(spec, value);
}

std::string render_train_spec(const TrainSpec& spec) {
  std::string out;
  for (const auto& f : fields()) {
    if (auto it = comments().find(f.key); it != comments().end()) out += it->second + "\n";
    out += fmt::format("{} = {}\n", f.key, f.get(spec));
  }
  return out;
}

TrainSpec parse_train_spec(std::string_view text) {
  TrainSpec spec;
  std::set<std::string> seen;
  int line_no = 0;
  for (const auto& raw : util::split_lines(text)) {
    ++line_no;
    const auto line = util::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::ConfigError, fmt::format("line {}: expected key = value", line_no));
    }
    const std::string key(util::trim(line.substr(0, eq)));
    const Field& f = field(key);
    if (!seen.insert(f.key).second) fail(ErrorCode::ConfigError, fmt::format("line {}: {} set twice", line_no, key));
    f.set(spec, util::trim(line.substr(eq + 1)));
  }
  for (const auto& f : fields()) {
    if (!seen.count(f.key)) fail(ErrorCode::ConfigError, fmt::format("training config is missing {}", f.key));
  }
  return spec;
}

TrainSpec export_train_spec(TrainDataset d, const std::vector<std::string>& overrides, const std::filesystem::path& out) {
  TrainSpec spec = default_train_spec(d);
  for (const auto& o : overrides) apply_override(spec, o);
  // dataset overrides re-derive nothing; the caller picks the dataset
  util::write_file_atomic(out, render_train_spec(spec));
  return spec;
}

}  // namespace poda::eval
