// poda: command-line entry point for the augmentation pipeline, the
// contrastive kernel checks and the evaluation harness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "poda/dataset.hpp"
#include "poda/error.hpp"
#include "poda/eval.hpp"
#include "poda/llm_client.hpp"
#include "poda/pipeline.hpp"
#include "poda/prompts.hpp"
#include "poda/serialization.hpp"
#include "poda/tpcl.hpp"
#include "poda/tpcl_checks.hpp"
#include "poda/train_spec.hpp"
#include "poda/util.hpp"

#ifndef PODA_DATA_DIR
#define PODA_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace poda;

namespace {

constexpr int kExitFailed = 1;  // ran fine, verdict negative (tpcl-check)
constexpr int kExitError = 2;

struct BackendOpts {
  std::string kind = "replay";
  std::string transcript;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string auth_env = "OPENAI_API_KEY";
  int max_retries = 5;
  int max_concurrency = 4;
  int rpm = 0;
  int timeout_ms = 120000;
};

struct DataOpts {
  std::string path;
  std::string source = "reclor";
  std::string split = "train";
  std::size_t limit = 0;
};

struct Common {
  std::string config;
  std::string out;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c, bool needs_out, const std::string& out_help) {
  app->add_option("--config", c.config, "JSON file of option values; flags given on the command line win")
      ->check(CLI::ExistingFile);
  auto* o = app->add_option("--out", c.out, out_help);
  if (needs_out) o->required();
  app->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

void add_backend(CLI::App* app, BackendOpts& b) {
  app->add_option("--backend", b.kind, "Completion backend")->check(CLI::IsMember({"replay", "remote"}))->capture_default_str();
  app->add_option("--transcript", b.transcript,
                  "Replay: transcript to answer from. Remote: transcript to append every call to");
  app->add_option("--endpoint", b.endpoint, "Chat-completions URL for the remote backend")->capture_default_str();
  app->add_option("--auth-env", b.auth_env, "Environment variable holding the bearer token")->capture_default_str();
  app->add_option("--max-retries", b.max_retries, "Retries on connection failures, 429 and 5xx")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--max-concurrency", b.max_concurrency, "Requests in flight")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--rpm", b.rpm, "Requests per minute, 0 for unlimited")->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--timeout-ms", b.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_data(CLI::App* app, DataOpts& d, const std::string& flag = "--data") {
  app->add_option(flag, d.path, "JSONL dataset")->required()->check(CLI::ExistingFile);
  app->add_option("--source", d.source, "reclor | logiqa2 | synthetic")->capture_default_str();
  app->add_option("--split", d.split, "train | dev | test | test-e | test-h")->capture_default_str();
  app->add_option("--limit", d.limit, "Use only the first N samples (0 = all)")->capture_default_str();
}

std::shared_ptr<llm::CompletionBackend> make_backend(const BackendOpts& b) {
  llm::BackendConfig cfg;
  cfg.kind = b.kind == "remote" ? llm::BackendKind::Remote : llm::BackendKind::Replay;
  cfg.endpoint = b.endpoint;
  cfg.auth_env = b.auth_env;
  cfg.transcript_path = b.transcript;
  cfg.max_retries = b.max_retries;
  cfg.max_concurrency = b.max_concurrency;
  if (b.rpm > 0) cfg.requests_per_minute = b.rpm;
  cfg.timeout = std::chrono::milliseconds(b.timeout_ms);
  return llm::make_backend(cfg);
}

std::vector<McqSample> load_samples(const DataOpts& d) {
  auto samples = load_dataset(d.path, parse_source(d.source), parse_split(d.split));
  if (d.limit && samples.size() > d.limit) samples.resize(d.limit);
  return samples;
}

// Fills options not given on the command line from a JSON object keyed by
// long option name.
void apply_config_file(CLI::App* app, const std::string& path) {
  Json cfg;
  try {
    cfg = Json::parse(util::read_file(path));
  } catch (const Json::exception& e) {
    fail(ErrorCode::ConfigError, fmt::format("{}: {}", path, e.what()));
  }
  if (!cfg.is_object()) fail(ErrorCode::ConfigError, fmt::format("{}: expected a JSON object", path));
  for (const auto& [key, value] : cfg.items()) {
    if (key == "command" || key == "config") continue;
    CLI::Option* opt = nullptr;
    try {
      opt = app->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      fail(ErrorCode::ConfigError, fmt::format("{}: unknown option \"{}\" for {}", path, key, app->get_name()));
    }
    if (opt->count() > 0) continue;
    auto text = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(text(v));
    } else {
      opt->add_result(text(value));
    }
    opt->run_callback();
  }
}

// Every long option of the command with its effective value.
Json effective_config(CLI::App* app) {
  Json j;
  j["command"] = app->get_name();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> vals = opt->results();
    if (vals.empty() && opt->get_type_size() == 0) vals = {"false"};
    if (vals.empty() && !opt->get_default_str().empty()) vals = {opt->get_default_str()};
    if (opt->get_expected_max() > 1) {
      j[name] = vals;
    } else if (!vals.empty()) {
      j[name] = vals.back();
    }
  }
  return j;
}

void write_effective_config(CLI::App* app, const fs::path& dir) {
  util::write_file_atomic(dir / "effective_config.json", dump_pretty(effective_config(app)));
}

fs::path default_exemplar_dir() { return fs::path(PODA_DATA_DIR) / "exemplars"; }

std::vector<std::size_t> parse_labels(const std::string& csv) {
  std::vector<std::size_t> out;
  std::string cur;
  auto flush = [&] {
    auto t = util::trim(cur);
    if (t.size() == 1 || (t.size() == 3 && t.front() == '(' && t.back() == ')')) {
      auto idx = rationale::label_index(t.size() == 1 ? t[0] : t[1]);
      if (!idx) fail(ErrorCode::ConfigError, fmt::format("bad option label \"{}\"", t));
      out.push_back(*idx);
    } else if (!t.empty()) {
      fail(ErrorCode::ConfigError, fmt::format("bad option label \"{}\"", t));
    }
    cur.clear();
  };
  for (char c : csv) {
    if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

void print_error(const std::string& cls, const std::string& msg) {
  Json j;
  j["error"] = cls;
  j["message"] = msg;
  std::cerr << dump_line(j) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Premise-oriented counterfactual augmentation and thought-path contrastive tooling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // annotate / augment
  Common c_job;
  BackendOpts b_job;
  DataOpts d_job;
  std::string exemplars = default_exemplar_dir().string();
  std::string model_cra = "gpt-4-0613", model_pg = "gpt-4-0125-preview", model_cg = "gpt-4-0125-preview",
              model_cv = "gpt-4-0613";
  double gen_temperature = 0.75, gen_top_p = 0.9;
  int max_tokens = llm::kDefaultMaxTokens;
  int correction_rounds = 1;
  int parallelism = 1;
  std::string candidates = "all";
  bool skip_absolute = false;
  std::string checkpoint_dir;

  auto add_job = [&](CLI::App* sub, bool full) {
    add_common(sub, c_job, true, "Output directory");
    add_backend(sub, b_job);
    add_data(sub, d_job);
    sub->add_option("--exemplars", exemplars, "Directory with cra.txt, pg.txt, cg.txt, cv.txt")->capture_default_str();
    sub->add_option("--model-cra", model_cra, "Rationale annotation model")->capture_default_str();
    sub->add_option("--temperature", gen_temperature, "Generation temperature")->capture_default_str();
    sub->add_option("--top-p", gen_top_p, "Generation top-p")->capture_default_str();
    sub->add_option("--max-tokens", max_tokens, "Completion token limit")->capture_default_str();
    sub->add_option("--correction-rounds", correction_rounds, "Hinted re-annotations after a wrong answer")
        ->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--parallelism", parallelism, "Samples processed concurrently")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--checkpoint-dir", checkpoint_dir, "Per-sample checkpoints (default: <out>/checkpoints)");
    if (!full) return;
    sub->add_option("--model-pg", model_pg, "Premise generation model")->capture_default_str();
    sub->add_option("--model-cg", model_cg, "Context generation model")->capture_default_str();
    sub->add_option("--model-cv", model_cv, "Verification model")->capture_default_str();
    sub->add_option("--candidates", candidates, "\"all\" or comma-separated labels such as b,d")->capture_default_str();
    sub->add_flag("--skip-absolute", skip_absolute, "Skip candidates worded with absolute terms (must, never, ...)");
  };
  auto* annotate = app.add_subcommand("annotate", "Annotate structured rationales for a dataset");
  add_job(annotate, false);
  auto* augment = app.add_subcommand("augment", "Annotate, then generate and verify counterfactual contexts");
  add_job(augment, true);

  // pair
  Common c_pair;
  DataOpts d_pair;
  std::string records_path;
  auto* pair = app.add_subcommand("pair", "Pair verified counterfactual records with their originals");
  add_common(pair, c_pair, true, "Output directory");
  add_data(pair, d_pair);
  pair->add_option("--records", records_path, "records.jsonl from augment")->required()->check(CLI::ExistingFile);

  // tpcl-check
  Common c_check;
  int seeds = 100;
  auto* check = app.add_subcommand("tpcl-check", "Run the contrastive-kernel property suite (offline)");
  add_common(check, c_check, false, "Write the JSON report to this file");
  check->add_option("--seeds", seeds, "Random items per randomized property")->check(CLI::PositiveNumber)->capture_default_str();

  // descent-demo
  Common c_demo;
  std::uint64_t demo_seed = 2024;
  int demo_steps = 200;
  double demo_step = 0.1;
  tpcl::DemoTemplate tmpl;
  std::string demo_init = "random";
  auto* demo = app.add_subcommand("descent-demo", "Gradient descent on random thought vectors; prints a similarity trace");
  add_common(demo, c_demo, false, "Write the trace to this file instead of stdout");
  demo->add_option("--seed", demo_seed, "RNG seed")->capture_default_str();
  demo->add_option("--steps", demo_steps, "Descent steps")->check(CLI::PositiveNumber)->capture_default_str();
  demo->add_option("--step-size", demo_step, "Step size")->capture_default_str();
  demo->add_option("--tau", tmpl.tau, "Temperature")->capture_default_str();
  demo->add_option("--dim", tmpl.dim, "Vector dimension")->capture_default_str();
  demo->add_option("--n-similar", tmpl.n_similar, "Similar pairs")->capture_default_str();
  demo->add_option("--n-dissimilar", tmpl.n_dissimilar, "Dissimilar pairs")->capture_default_str();
  demo->add_option("--init", demo_init, "random | identical")->check(CLI::IsMember({"random", "identical"}))->capture_default_str();

  // evaluate-accuracy
  Common c_acc;
  BackendOpts b_acc;
  DataOpts d_acc;
  std::string acc_exemplars = (default_exemplar_dir() / "eval.txt").string();
  std::string acc_model = "gpt-4o";
  std::size_t k = 3;
  int acc_parallelism = 1;
  std::size_t acc_subsample = 0;
  std::uint64_t acc_seed = 0;
  auto* acc = app.add_subcommand("evaluate-accuracy", "k-shot CoT accuracy at temperature 0");
  add_common(acc, c_acc, true, "Output directory");
  add_backend(acc, b_acc);
  add_data(acc, d_acc);
  acc->add_option("--exemplars", acc_exemplars, "Exemplar file")->capture_default_str();
  acc->add_option("--model", acc_model, "Model id")->capture_default_str();
  acc->add_option("-k,--shots", k, "Demonstrations per prompt")->capture_default_str();
  acc->add_option("--parallelism", acc_parallelism, "Concurrent requests")->check(CLI::PositiveNumber)->capture_default_str();
  acc->add_option("--subsample", acc_subsample, "Evaluate a seeded random subset of N samples (0 = all)")->capture_default_str();
  acc->add_option("--seed", acc_seed, "Subsample seed")->capture_default_str();

  // evaluate-quality
  Common c_q;
  BackendOpts b_q;
  std::string items_path;
  std::string q_target = "context";
  std::vector<std::string> q_metrics;
  std::string q_method = "PODA";
  std::string q_model = "gpt-4o-2024-05-13";
  int q_parallelism = 1;
  std::size_t q_subsample = 0;
  std::uint64_t q_seed = 0;
  auto* quality = app.add_subcommand("evaluate-quality", "Rubric-judge scores on a 1-5 scale");
  add_common(quality, c_q, true, "Output directory");
  add_backend(quality, b_q);
  quality->add_option("--items", items_path,
                      "JSONL items: id, original_context, context, question, options, rationale")
      ->required()->check(CLI::ExistingFile);
  quality->add_option("--target", q_target, "context | rationale")->check(CLI::IsMember({"context", "rationale"}))->capture_default_str();
  quality->add_option("--metrics", q_metrics, "Subset of the target's metrics (default: all four)");
  quality->add_option("--method", q_method, "Method tag for the report")->capture_default_str();
  quality->add_option("--model", q_model, "Judge model id")->capture_default_str();
  quality->add_option("--parallelism", q_parallelism, "Concurrent requests")->check(CLI::PositiveNumber)->capture_default_str();
  quality->add_option("--subsample", q_subsample, "Judge a seeded random subset of N items (0 = all)")->capture_default_str();
  quality->add_option("--seed", q_seed, "Subsample seed")->capture_default_str();

  // export-train-config
  Common c_train;
  std::string dataset = "reclor";
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("export-train-config", "Write the two-stage fine-tuning configuration");
  add_common(train, c_train, false, "Output file (default: stdout)");
  train->add_option("--dataset", dataset, "reclor | logiqa2")->capture_default_str();
  train->add_option("--set", overrides, "Override key=value (repeatable), e.g. epochs=3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    std::string config_path;
    for (const auto* c : {&c_job, &c_pair, &c_check, &c_demo, &c_acc, &c_q, &c_train}) {
      if (!c->config.empty()) config_path = c->config;
    }
    if (!config_path.empty()) apply_config_file(sub, config_path);
    bool verbose = c_job.verbose || c_pair.verbose || c_check.verbose || c_demo.verbose || c_acc.verbose || c_q.verbose ||
                   c_train.verbose;
    spdlog::set_default_logger(spdlog::stderr_color_mt("poda"));
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    if (sub == annotate || sub == augment) {
      const fs::path out = c_job.out;
      pipeline::JobConfig cfg;
      cfg.max_correction_rounds = correction_rounds;
      cfg.parallelism = parallelism;
      auto sampling = [&](const std::string& model) {
        prompts::Sampling s{model, gen_temperature, gen_top_p, max_tokens};
        return s;
      };
      cfg.cra = sampling(model_cra);
      cfg.pg = sampling(model_pg);
      cfg.cg = sampling(model_cg);
      cfg.cv = sampling(model_cv);
      cfg.skip_absolute_wording = skip_absolute;
      if (candidates != "all") {
        cfg.candidates = pipeline::CandidateMode::Listed;
        cfg.listed_candidates = parse_labels(candidates);
      }
      cfg.checkpoint_dir = checkpoint_dir.empty() ? out / "checkpoints" : fs::path(checkpoint_dir);
      pipeline::validate(cfg);
      auto samples = load_samples(d_job);
      auto ex = pipeline::load_exemplars(exemplars);
      write_effective_config(sub, out);
      pipeline::Engine engine(make_backend(b_job), std::move(ex), cfg);
      auto result = sub == augment ? engine.run_job(samples, out) : engine.run_annotation(samples, out);
      std::cout << render_table(result.summary);
      return 0;
    }

    if (sub == pair) {
      const fs::path out = c_pair.out;
      auto originals = load_samples(d_pair);
      auto records = load_records(records_path);
      auto pairs = pair_samples(originals, records);
      write_effective_config(sub, out);
      std::string pairs_text;
      std::vector<McqSample> counterfactuals;
      for (const auto& p : pairs) {
        Json j;
        j["original_id"] = p.original->id;
        j["counterfactual_id"] = p.counterfactual.id;
        j["flipped_from"] = rationale::option_tag(p.flipped_from);
        j["flipped_to"] = rationale::option_tag(p.flipped_to);
        pairs_text += dump_line(j) + "\n";
        counterfactuals.push_back(p.counterfactual);
      }
      util::write_file_atomic(out / "pairs.jsonl", pairs_text);
      save_dataset(out / "counterfactuals.jsonl", counterfactuals);
      std::cout << fmt::format("{} pairs from {} records\n", pairs.size(), records.size());
      return 0;
    }

    if (sub == check) {
      auto report = tpcl::run_tpcl_checks(seeds);
      std::cout << tpcl::render_report(report);
      if (!c_check.out.empty()) util::write_file_atomic(c_check.out, dump_pretty(tpcl::to_json(report)));
      return report.all_passed() ? 0 : kExitFailed;
    }

    if (sub == demo) {
      tmpl.init = demo_init == "identical" ? tpcl::DemoInit::Identical : tpcl::DemoInit::Random;
      auto trace = tpcl::descent_demo(demo_seed, demo_steps, demo_step, tmpl);
      const std::string text = tpcl::render_trace(trace);
      if (c_demo.out.empty()) {
        std::cout << text;
      } else {
        util::write_file_atomic(c_demo.out, text);
        const auto dir = fs::path(c_demo.out).parent_path();
        write_effective_config(sub, dir.empty() ? fs::path(".") : dir);
      }
      return 0;
    }

    if (sub == acc) {
      const fs::path out = c_acc.out;
      auto samples = load_samples(d_acc);
      if (acc_subsample) {
        std::vector<McqSample> picked;
        for (auto i : eval::seeded_subsample(samples.size(), acc_subsample, acc_seed)) picked.push_back(samples[i]);
        samples = std::move(picked);
      }
      auto shots = prompts::load_exemplars(acc_exemplars);
      write_effective_config(sub, out);
      auto backend = make_backend(b_acc);
      auto report = eval::evaluate_accuracy(samples, shots, *backend, k, prompts::evaluation_sampling(acc_model),
                                            acc_parallelism);
      util::write_file_atomic(out / "accuracy.json", dump_pretty(eval::to_json(report)));
      const std::string table = eval::render_table(report);
      util::write_file_atomic(out / "accuracy.txt", table);
      std::cout << table;
      return 0;
    }

    if (sub == quality) {
      const fs::path out = c_q.out;
      std::vector<eval::QualityItem> items;
      int line_no = 0;
      for (const auto& line : util::split_lines(util::read_file(items_path))) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
          Json j = Json::parse(line);
          eval::QualityItem item;
          item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
          auto opt_text = [&](const char* key) -> std::optional<std::string> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<std::string>();
          };
          item.payload.original_context = opt_text("original_context");
          item.payload.context = opt_text("context");
          item.payload.question = opt_text("question");
          item.payload.rationale = opt_text("rationale");
          if (j.contains("options")) item.payload.options = j.at("options").get<std::vector<std::string>>();
          items.push_back(std::move(item));
        } catch (const Json::exception& e) {
          fail(ErrorCode::MalformedRecord, fmt::format("{} record {}: {}", items_path, line_no, e.what()));
        }
      }
      if (q_subsample) {
        std::vector<eval::QualityItem> picked;
        for (auto i : eval::seeded_subsample(items.size(), q_subsample, q_seed)) picked.push_back(items[i]);
        items = std::move(picked);
      }
      const auto target = prompts::parse_rubric_target(q_target);
      std::vector<prompts::RubricSpec> specs;
      if (q_metrics.empty()) {
        specs = prompts::default_rubrics(target);
      } else {
        for (const auto& m : q_metrics) specs.push_back(prompts::default_rubric(target, prompts::parse_rubric_metric(m)));
      }
      write_effective_config(sub, out);
      auto backend = make_backend(b_q);
      auto report = eval::evaluate_quality(items, specs, *backend, prompts::evaluation_sampling(q_model), q_method,
                                           q_parallelism);
      util::write_file_atomic(out / "quality.json", dump_pretty(eval::to_json(report)));
      const std::string table = eval::render_table(report);
      util::write_file_atomic(out / "quality.txt", table);
      std::cout << table;
      return 0;
    }

    if (sub == train) {
      const auto d = eval::parse_train_dataset(dataset);
      if (c_train.out.empty()) {
        auto spec = eval::default_train_spec(d);
        for (const auto& o : overrides) eval::apply_override(spec, o);
        std::cout << eval::render_train_spec(spec);
      } else {
        eval::export_train_spec(d, overrides, c_train.out);
        const auto dir = fs::path(c_train.out).parent_path();
        write_effective_config(sub, dir.empty() ? fs::path(".") : dir);
      }
      return 0;
    }
  } catch (const Error& e) {
    print_error(std::string(error_code_name(e.code())), e.what());
    return kExitError;
  } catch (const CLI::Error& e) {
    print_error("ConfigError", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return kExitError;
  }
  return 0;
}
