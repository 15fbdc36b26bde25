// One PASS/FAIL line per acceptance criterion. Reference values here are
// computed independently of the library (own scalar maths, own loops).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "generators.hpp"
#include "poda/error.hpp"
#include "poda/eval.hpp"
#include "poda/llm_client.hpp"
#include "poda/pipeline.hpp"
#include "poda/prompts.hpp"
#include "poda/rationale.hpp"
#include "poda/serialization.hpp"
#include "poda/tpcl.hpp"
#include "poda/train_spec.hpp"
#include "poda/util.hpp"
#include "scripted.hpp"

using namespace poda;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// --- independent scalar oracle -------------------------------------------

long double oracle_sigmoid(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

long double oracle_cos(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

long double oracle_loss(const tpcl::TpclBatchItem& item) {
  long double sum = 0;
  for (const auto& s : item.similar) {
    for (const auto& d : item.dissimilar) {
      const long double z = (oracle_cos(s.p.values, s.p_prime.values) - oracle_cos(d.p.values, d.p_prime.values)) /
                            static_cast<long double>(item.tau);
      sum += -std::log(oracle_sigmoid(z));
    }
  }
  return sum / static_cast<long double>(item.similar.size() * item.dissimilar.size());
}

tpcl::TpclBatchItem random_item(std::mt19937_64& rng, std::size_t d, std::size_t n, std::size_t m, double tau) {
  std::normal_distribution<double> g;
  auto vec = [&] {
    tpcl::ThoughtVector v;
    for (std::size_t i = 0; i < d; ++i) v.values.push_back(g(rng));
    return v;
  };
  tpcl::TpclBatchItem item;
  item.tau = tau;
  for (std::size_t i = 0; i < n; ++i) item.similar.push_back({vec(), vec(), tpcl::PairKind::Similar, i});
  for (std::size_t i = 0; i < m; ++i) item.dissimilar.push_back({vec(), vec(), tpcl::PairKind::Dissimilar, n + i});
  return item;
}

// --- criteria ----------------------------------------------------------------

Verdict gradient_exactness() {
  Verdict v;
  const auto t0 = Clock::now();
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t d : {4u, 8u, 64u}) {
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(1000 * d + seed);
      auto item = random_item(rng, d, 2, 2, 0.1);
      const auto grad = tpcl::tpcl_gradient(item);
      auto check = [&](std::vector<double>& x, const std::vector<double>& g) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double keep = x[i];
          x[i] = keep + h;
          const double up = tpcl::tpcl_loss(item);
          x[i] = keep - h;
          const double down = tpcl::tpcl_loss(item);
          x[i] = keep;
          const double fd = (up - down) / (2 * h);
          // relative error, floored so coordinates near zero are judged on
          // an absolute scale that central differences can resolve
          const double rel = std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-4});
          worst = std::max(worst, rel);
        }
      };
      for (std::size_t k = 0; k < 2; ++k) {
        check(item.similar[k].p.values, grad.similar[k].d_p);
        check(item.similar[k].p_prime.values, grad.similar[k].d_p_prime);
        check(item.dissimilar[k].p.values, grad.dissimilar[k].d_p);
        check(item.dissimilar[k].p_prime.values, grad.dissimilar[k].d_p_prime);
      }
    }
  }
  const double secs = seconds_since(t0);
  v.require(worst < 1e-6, fmt::format("worst relative error {:.3e}", worst));
  v.require(secs < 5.0, fmt::format("took {:.2f}s", secs));
  if (v.ok) v.detail = fmt::format("worst relative error {:.3e} in {:.2f}s", worst, secs);
  return v;
}

Verdict spot_values() {
  Verdict v;
  const double ln2 = static_cast<double>(std::log(2.0L));
  for (double s : {-0.7, 0.0, 0.3, 0.99}) {
    v.require(std::abs(tpcl::bt_probability(s, s, 0.1) - 0.5) < 1e-12, "bt_probability of equal sims");
    v.require(std::abs(tpcl::pair_loss(s, s, 0.1) - ln2) < 1e-12, "pair_loss of equal sims");
  }
  const double p_oracle = static_cast<double>(oracle_sigmoid((0.9L - 0.8L) / 0.1L));
  const double l_oracle = static_cast<double>(-std::log(oracle_sigmoid((0.9L - 0.8L) / 0.1L)));
  v.require(std::abs(p_oracle - 0.7310585786) < 1e-9, "oracle disagrees with reference probability");
  v.require(std::abs(l_oracle - 0.3132616875) < 1e-9, "oracle disagrees with reference loss");
  v.require(std::abs(tpcl::bt_probability(0.9, 0.8, 0.1) - p_oracle) < 1e-9, "bt_probability(0.9, 0.8, 0.1)");
  v.require(std::abs(tpcl::pair_loss(0.9, 0.8, 0.1) - l_oracle) < 1e-9, "pair_loss(0.9, 0.8, 0.1)");
  if (v.ok) v.detail = fmt::format("p={:.10f} loss={:.10f}", tpcl::bt_probability(0.9, 0.8, 0.1), tpcl::pair_loss(0.9, 0.8, 0.1));
  return v;
}

Verdict brute_force() {
  Verdict v;
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 2 + rng() % 63, n = 1 + rng() % 4, m = 1 + rng() % 4;
    const double tau = 0.05 + 0.95 * std::uniform_real_distribution<double>()(rng);
    const auto item = random_item(rng, d, n, m, tau);
    worst = std::max(worst, static_cast<double>(std::abs(tpcl::tpcl_loss(item) - oracle_loss(item))));
  }
  v.require(worst <= 1e-12, fmt::format("worst deviation {:.3e}", worst));
  if (v.ok) v.detail = fmt::format("worst deviation {:.3e}", worst);
  return v;
}

Verdict descent_trend() {
  Verdict v;
  const auto t0 = Clock::now();
  tpcl::DemoTemplate t;
  t.dim = 16;
  t.tau = 0.1;
  const auto trace = tpcl::descent_demo(2024, 200, 0.1, t);
  const double secs = seconds_since(t0);
  v.require(trace.size() == 201, "trace length");
  if (!v.ok) return v;
  const auto& a = trace.front();
  const auto& b = trace.back();
  v.require(b.mean_sim_similar > a.mean_sim_similar, "similar-pair cosine did not rise");
  v.require(b.mean_sim_dissimilar < a.mean_sim_dissimilar, "dissimilar-pair cosine did not fall");
  v.require(b.margin > a.margin, "margin did not grow");
  v.require(secs < 1.0, fmt::format("took {:.3f}s", secs));
  if (v.ok)
    v.detail = fmt::format("margin {:.4f} -> {:.4f}, sim+ {:.4f} -> {:.4f}, sim- {:.4f} -> {:.4f}", a.margin, b.margin,
                           a.mean_sim_similar, b.mean_sim_similar, a.mean_sim_dissimilar, b.mean_sim_dissimilar);
  return v;
}

Verdict pair_selection() {
  Verdict v;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  auto samples = testing::make_samples(4);
  std::size_t checked = 0;
  for (const auto& s : samples) {
    for (std::size_t old_a = 0; old_a < 4; ++old_a) {
      for (std::size_t new_a = 0; new_a < 4; ++new_a) {
        if (old_a == new_a) continue;
        const auto orig = testing::scripted_rationale(s, old_a);
        const auto cf = testing::scripted_rationale(s, new_a);
        tpcl::PathVectors vecs;
        for (int o = 0; o < 4; ++o) {
          tpcl::ThoughtVector a, b;
          for (int k = 0; k < 8; ++k) {
            a.values.push_back(g(rng));
            b.values.push_back(g(rng));
          }
          vecs.original.push_back(a);
          vecs.counterfactual.push_back(b);
        }
        const auto item = tpcl::select_pairs(orig, cf, old_a, new_a, vecs);
        std::set<std::size_t> dis, sim;
        for (const auto& p : item.dissimilar) {
          dis.insert(p.option);
          v.require(p.kind == tpcl::PairKind::Dissimilar, "dissimilar kind");
          v.require(p.p == vecs.original[p.option] && p.p_prime == vecs.counterfactual[p.option], "vector mapping");
        }
        for (const auto& p : item.similar) {
          sim.insert(p.option);
          v.require(p.kind == tpcl::PairKind::Similar, "similar kind");
        }
        v.require(item.dissimilar.size() == 2 && dis == std::set<std::size_t>{old_a, new_a},
                  fmt::format("dissimilar set for {}->{}", old_a, new_a));
        v.require(item.similar.size() == 2 && sim.size() == 2 && !sim.count(old_a) && !sim.count(new_a),
                  fmt::format("similar set for {}->{}", old_a, new_a));
        ++checked;
      }
    }
  }
  if (v.ok) v.detail = fmt::format("{} option pairs", checked);
  return v;
}

Verdict rationale_round_trip() {
  Verdict v;
  std::mt19937_64 rng(2718);
  const int n = 10000;
  for (int i = 0; i < n && v.ok; ++i) {
    const auto r = testing::random_rationale(rng);
    try {
      const auto back = rationale::parse_rationale(rationale::render_rationale(r), r.paths.size());
      v.require(back == r, fmt::format("round trip {} differs", i));
    } catch (const Error& e) {
      v.require(false, fmt::format("round trip {} threw {}", i, e.what()));
    }
  }
  const auto text = util::read_file(fs::path(PODA_TEST_FIXTURES) / "structured_example.txt");
  try {
    const auto r = rationale::parse_rationale(text, 4);
    using rationale::RelationKind;
    v.require(r.predicted == 1, "example predicted label");
    v.require(r.premises.size() == 3, "example premise count");
    const std::vector<rationale::PremiseRelation> want{
        {RelationKind::Unrelated, {}},
        {RelationKind::Supported, {2, 3}},
        {RelationKind::Unrelated, {}},
        {RelationKind::Contradicted, {1}},
    };
    for (std::size_t k = 0; k < 4 && k < r.paths.size(); ++k)
      v.require(r.paths[k].relation == want[k], fmt::format("example relation {}", k));
  } catch (const Error& e) {
    v.require(false, fmt::format("example threw {}", e.what()));
  }
  if (v.ok) v.detail = fmt::format("{} generated rationales plus the structured example", n);
  return v;
}

Verdict end_to_end(const fs::path& root) {
  Verdict v;
  const auto t0 = Clock::now();
  const auto samples = testing::make_samples(10);
  const auto ex = testing::default_exemplars();
  const std::set<std::size_t> mismatched{1, 4, 8, 11, 15, 19, 23, 27};
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < samples.size(); ++i) index_of[samples[i].id] = i;

  // record the scripted model once
  auto scripted = std::make_shared<testing::ScriptedBackend>(samples);
  scripted->cv_agrees = [&](const std::string& id, std::size_t target) {
    const auto& s = samples[index_of.at(id)];
    const std::size_t k = target < s.answer ? target : target - 1;  // position among candidates
    return !mismatched.count(index_of.at(id) * 3 + k);
  };
  const fs::path transcript = root / "transcript.jsonl";
  auto recorder = std::make_shared<llm::RecordingBackend>(scripted, transcript);
  pipeline::Engine(recorder, ex, {}).run_job(samples, root / "record");

  // clean replay
  auto replay_b = std::make_shared<llm::ReplayBackend>(transcript);
  const auto res = pipeline::Engine(replay_b, ex, {}).run_job(samples, root / "B");
  const std::map<std::string, std::size_t> want{{"Verified", 22}, {"VerificationMismatch", 8}};
  v.require(res.summary.flips == 30, fmt::format("{} flips", res.summary.flips));
  v.require(res.summary.counts == want, "summary counts " + dump_line(pipeline::to_json(res.summary)));

  // killed, then resumed
  auto replay_c = std::make_shared<llm::ReplayBackend>(transcript);
  bool killed = false;
  try {
    pipeline::Engine(std::make_shared<testing::KillAfter>(replay_c, 37), ex, {}).run_job(samples, root / "C");
  } catch (const std::runtime_error&) {
    killed = true;
  }
  v.require(killed, "first run was not interrupted");
  pipeline::JobConfig resume_cfg;
  resume_cfg.parallelism = 3;
  pipeline::Engine(replay_c, ex, resume_cfg).run_job(samples, root / "C");
  for (const char* f : {"records.jsonl", "annotations.jsonl", "summary.json"})
    v.require(util::read_file(root / "B" / f) == util::read_file(root / "C" / f), std::string(f) + " differs after resume");
  for (const auto& [digest, n] : replay_c->call_counts())
    v.require(n == 1, fmt::format("digest {} requested {} times", digest.substr(0, 12), n));
  v.require(replay_c->calls() == replay_b->calls(), fmt::format("{} calls vs {}", replay_c->calls(), replay_b->calls()));
  const double secs = seconds_since(t0);
  v.require(secs < 10.0, fmt::format("took {:.2f}s", secs));
  if (v.ok) v.detail = fmt::format("22 verified, 8 mismatches, {} calls, resume exact, {:.2f}s", replay_c->calls(), secs);
  return v;
}

Verdict pg_contract() {
  Verdict v;
  std::mt19937_64 rng(99);
  const auto shots = testing::default_exemplars().pg;
  const auto sampling = prompts::generation_sampling("gpt-4-0125-preview");
  std::size_t built = 0;
  for (int i = 0; i < 2000 && v.ok; ++i) {
    auto r = testing::random_rationale(rng);
    if (i % 7 == 0 && !r.premises.empty()) r.premises.front().text += " [blank]";
    const std::size_t n = r.paths.size();
    const std::size_t cur = r.predicted;
    const std::size_t next = (cur + 1 + rng() % (n - 1)) % n;
    const auto part = rationale::partition_premises(r, cur);
    std::vector<rationale::Premise> linked;
    for (int idx : part.linked) linked.push_back(r.premises[static_cast<std::size_t>(idx - 1)]);
    const std::string question = i % 5 == 0 ? "Which [blank] is implied?" : "Which option follows?";
    const auto req = prompts::build_pg_prompt(question, "Option " + std::to_string(cur),
                                              linked, "Option " + std::to_string(next), shots, sampling);
    const auto& query = prompts::query_segment(req);
    std::size_t count = 0;
    for (auto pos = query.find("[blank]"); pos != std::string::npos; pos = query.find("[blank]", pos + 1)) ++count;
    v.require(count == 1, fmt::format("prompt {} has {} [blank] tokens in the query", i, count));
    // the exemplar completion is the assistant turn right before the query
    std::string expected;
    for (std::size_t k = 0; k < linked.size(); ++k) expected += (k ? "\n" : "") + linked[k].text;
    const auto& msgs = req.messages;
    v.require(msgs.size() >= 3 && msgs[msgs.size() - 2].role == llm::Role::Assistant &&
                  msgs[msgs.size() - 2].text == expected,
              fmt::format("prompt {} exemplar completion differs from the linked premises", i));
    ++built;
  }
  if (v.ok) v.detail = fmt::format("{} prompts", built);
  return v;
}

Verdict train_spec_fidelity(const fs::path& root, const std::string& cli) {
  Verdict v;
  struct Expect {
    eval::TrainDataset d;
    int alpha;
  };
  for (auto [d, alpha] : {Expect{eval::TrainDataset::ReClor, 64}, Expect{eval::TrainDataset::LogiQA2, 32}}) {
    const auto name = std::string(eval::train_dataset_name(d));
    const auto out = root / ("train_" + name + ".cfg");
    const auto cmd = fmt::format("\"{}\" export-train-config --dataset {} --out \"{}\" > /dev/null", cli, name, out.string());
    v.require(std::system(cmd.c_str()) == 0, "cli failed for " + name);
    if (!v.ok) return v;
    const auto text = util::read_file(out);
    std::map<std::string, std::string> kv;
    for (const auto& line : util::split_lines(text)) {
      const auto t = util::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) continue;
      kv[std::string(util::trim(t.substr(0, eq)))] = std::string(util::trim(t.substr(eq + 1)));
    }
    auto num = [&](const std::string& k) { return kv.count(k) ? std::stod(kv[k]) : std::nan(""); };
    v.require(num("batch_size") == 32, name + " batch_size");
    v.require(num("max_seq_len") == 1536, name + " max_seq_len");
    v.require(num("lora.rank") == 64, name + " lora.rank");
    v.require(num("lora.alpha") == alpha, name + " lora.alpha");
    v.require(num("lora.dropout") == 0.05, name + " lora.dropout");
    v.require(num("warmup_ratio") == 0.03, name + " warmup_ratio");
    v.require(num("stage2.learning_rate") == 1e-6, name + " stage2.learning_rate");
    v.require(num("stage2.tau") == 0.1, name + " stage2.tau");
    v.require(num("eval.temperature") == 0.0, name + " eval.temperature");
    const auto parsed = eval::parse_train_spec(text);
    v.require(parsed == eval::default_train_spec(d), name + " parsed file differs from defaults");
    v.require(eval::render_train_spec(parsed) == text, name + " re-render differs");
  }
  if (v.ok) v.detail = "both datasets";
  return v;
}

// Replays a recorded transcript for every evaluation call.
Verdict report_determinism(const fs::path& root) {
  Verdict v;
  const auto samples = testing::make_samples(12, "e");
  const auto shots = testing::default_exemplars().cra;
  const auto acc_sampling = prompts::evaluation_sampling("gpt-4o");
  const auto judge = prompts::evaluation_sampling("gpt-4o-2024-05-13");

  std::vector<eval::QualityItem> items;
  for (const auto& s : samples) {
    eval::QualityItem it;
    it.id = s.id;
    it.payload.original_context = s.context;
    it.payload.context = "A rewritten version: " + s.context;
    it.payload.question = s.question;
    it.payload.options = s.options;
    it.payload.rationale = rationale::render_rationale(testing::scripted_rationale(s, s.answer));
    items.push_back(it);
  }
  const auto ctx_specs = prompts::default_rubrics(prompts::RubricTarget::Context);

  // recording pass: a scripted judge whose score depends on the request
  auto scripted = std::make_shared<testing::ScriptedBackend>(samples);
  scripted->cra_answer = [](const McqSample& s, bool) { return s.id == "e3" || s.id == "e7" ? (s.answer + 2) % 4 : s.answer; };
  scripted->override_reply = [](const std::string& stage, const llm::ChatRequest& req) -> std::optional<std::string> {
    if (stage != "OTHER") return std::nullopt;  // judge prompts
    const auto& q = prompts::query_segment(req);
    const int score = 1 + static_cast<int>(util::sha256_hex(q)[0] % 5);
    return fmt::format("Reasonable overall.\nScore: {}", score);
  };
  const auto transcript = root / "eval_transcript.jsonl";
  {
    llm::RecordingBackend rec(scripted, transcript);
    eval::evaluate_accuracy(samples, shots, rec, 3, acc_sampling);
    eval::evaluate_quality(items, ctx_specs, rec, judge);
  }

  std::string acc_ref, qual_ref;
  for (int par : {1, 2, 5, 8}) {
    for (int rep = 0; rep < 2; ++rep) {
      llm::ReplayBackend replay(transcript);
      const auto acc = eval::evaluate_accuracy(samples, shots, replay, 3, acc_sampling, par);
      const auto qual = eval::evaluate_quality(items, ctx_specs, replay, judge, "PODA", par);
      const auto a = dump_pretty(eval::to_json(acc)) + eval::render_table(acc);
      const auto q = dump_pretty(eval::to_json(qual)) + eval::render_table(qual);
      if (acc_ref.empty()) {
        acc_ref = a;
        qual_ref = q;
        v.require(acc.overall.correct == 10 && acc.overall.total == 12, "accuracy counts");
        v.require(qual.overall.has_value(), "quality overall missing");
      }
      v.require(a == acc_ref, fmt::format("accuracy report differs at parallelism {}", par));
      v.require(q == qual_ref, fmt::format("quality report differs at parallelism {}", par));
    }
  }
  if (v.ok) v.detail = "8 replays at parallelism 1, 2, 5, 8";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "poda_cli";
  const fs::path root = testing::temp_dir("acceptance");

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "contrastive gradient matches central differences", gradient_exactness},
      {2, "closed-form preference spot values", spot_values},
      {3, "loss equals brute-force enumeration", brute_force},
      {4, "descent demo trend", descent_trend},
      {5, "pair selection rule", pair_selection},
      {6, "rationale round trip and structured example", rationale_round_trip},
      {7, "scripted replay job with kill and resume", [&] { return end_to_end(root / "job"); }},
      {8, "premise generation prompt contract", pg_contract},
      {9, "training config export", [&] { return train_spec_fidelity(root, cli); }},
      {10, "evaluation report determinism", [&] { return report_determinism(root); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      fs::create_directories(root / "job");
      v = c.run();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.ok) ++failed;
    std::printf("%s [%d] %s: %s\n", v.ok ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
