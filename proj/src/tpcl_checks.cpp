#include "poda/tpcl_checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/tpcl.hpp"

namespace poda::tpcl {
namespace {

// Independent scalar forms, written without the kernel's helpers.
double ref_sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double ref_nll(double ss, double sd, double tau) {
  const double z = (sd - ss) / tau;
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}
double ref_cos(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}
double brute_loss(const TpclBatchItem& item) {
  double total = 0;
  int count = 0;
  for (const auto& s : item.similar) {
    for (const auto& d : item.dissimilar) {
      total += ref_nll(ref_cos(s.p.values, s.p_prime.values), ref_cos(d.p.values, d.p_prime.values), item.tau);
      ++count;
    }
  }
  return total / count;
}

std::vector<std::vector<double>*> vector_slots(TpclBatchItem& item) {
  std::vector<std::vector<double>*> out;
  for (auto* list : {&item.similar, &item.dissimilar}) {
    for (auto& p : *list) {
      out.push_back(&p.p.values);
      out.push_back(&p.p_prime.values);
    }
  }
  return out;
}

std::vector<const std::vector<double>*> gradient_slots(const TpclGradient& g) {
  std::vector<const std::vector<double>*> out;
  for (const auto* list : {&g.similar, &g.dissimilar}) {
    for (const auto& p : *list) {
      out.push_back(&p.d_p);
      out.push_back(&p.d_p_prime);
    }
  }
  return out;
}

CheckResult make(std::string name, double err, double tol, std::string detail = {}) {
  return {std::move(name), err <= tol, err, tol, std::move(detail)};
}

CheckResult flag(std::string name, bool ok, std::string detail = {}) { return {std::move(name), ok, 0, 0, std::move(detail)}; }

CheckResult spot_values() {
  double err = 0;
  err = std::max(err, std::abs(bt_probability(0.3, 0.3, 0.1) - 0.5));
  err = std::max(err, std::abs(pair_loss(0.3, 0.3, 0.1) - std::log(2.0)));
  err = std::max(err, std::abs(bt_probability(0.9, 0.8, 0.1) - ref_sigmoid((0.9 - 0.8) / 0.1)));
  err = std::max(err, std::abs(pair_loss(0.9, 0.8, 0.1) - ref_nll(0.9, 0.8, 0.1)));
  err = std::max(err, std::abs(bt_probability(1.0, -1.0, 0.1) - 0.999999997938846));
  err = std::max(err, std::abs(pair_loss(-1.0, 1.0, 0.1) - 20.000000002061154));
  return make("closed-form spot values", err, 1e-9);
}

CheckResult complement(int seeds) {
  GaussianSource g(11);
  double err = 0;
  for (int i = 0; i < seeds * 10; ++i) {
    const double s = 2 * g.uniform() - 1, d = 2 * g.uniform() - 1, tau = 0.01 + g.uniform();
    err = std::max(err, std::abs(bt_probability(s, d, tau) + bt_probability(d, s, tau) - 1.0));
  }
  return make("preference complement", err, 1e-12);
}

CheckResult monotone(int seeds) {
  GaussianSource g(12);
  int bad = 0;
  for (int i = 0; i < seeds * 10; ++i) {
    const double s = 2 * g.uniform() - 1, d = 2 * g.uniform() - 1, delta = 1e-3 + 0.1 * g.uniform();
    if (!(pair_loss(s + delta, d, 0.1) < pair_loss(s, d, 0.1))) ++bad;
    if (!(pair_loss(s, d + delta, 0.1) > pair_loss(s, d, 0.1))) ++bad;
  }
  return flag("pair loss monotonicity", bad == 0, fmt::format("{} violations", bad));
}

CheckResult brute_force(int seeds) {
  GaussianSource g(13);
  double err = 0;
  for (int i = 0; i < seeds * 10; ++i) {
    const std::size_t n = 1 + static_cast<std::size_t>(g.uniform() * 4), m = 1 + static_cast<std::size_t>(g.uniform() * 4);
    const std::size_t d = 2 + static_cast<std::size_t>(g.uniform() * 30);
    auto item = random_item(g, d, n, m, 0.1);
    err = std::max(err, std::abs(tpcl_loss(item) - brute_loss(item)));
  }
  return make("loss equals enumeration", err, 1e-12);
}

CheckResult finite_difference(int seeds) {
  double err = 0;
  for (std::size_t d : {4u, 8u, 64u}) {
    for (int seed = 0; seed < seeds; ++seed) {
      GaussianSource g(static_cast<std::uint64_t>(seed) * 7919 + d);
      auto item = random_item(g, d, 2, 2, 0.1);
      const auto grad = tpcl_gradient(item);
      auto slots = vector_slots(item);
      auto gslots = gradient_slots(grad);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        for (std::size_t c = 0; c < d; ++c) {
          double& x = (*slots[k])[c];
          const double x0 = x;
          x = x0 + kFdStep;
          const double fp = brute_loss(item);
          x = x0 - kFdStep;
          const double fm = brute_loss(item);
          x = x0;
          err = std::max(err, fd_relative_error((*gslots[k])[c], (fp - fm) / (2 * kFdStep)));
        }
      }
    }
  }
  return make("gradient vs central differences", err, kFdTolerance,
              fmt::format("d in {{4, 8, 64}}, {} seeds, h = {}", seeds, kFdStep));
}

CheckResult scale_invariance(int seeds) {
  GaussianSource g(14);
  double err = 0;
  for (int i = 0; i < seeds; ++i) {
    auto item = random_item(g, 8, 2, 2, 0.1);
    const double before = tpcl_loss(item);
    for (auto* v : vector_slots(item)) {
      const double alpha = 0.1 + 10 * g.uniform();
      for (auto& x : *v) x *= alpha;
    }
    err = std::max(err, std::abs(tpcl_loss(item) - before));
  }
  return make("cosine scale invariance", err, 1e-12);
}

CheckResult descent_sign(int seeds) {
  GaussianSource g(15);
  int bad = 0;
  for (int i = 0; i < seeds; ++i) {
    auto item = random_item(g, 8, 2, 2, 0.1);
    const auto grad = tpcl_gradient(item);
    auto stepped = item;
    const double eta = 1e-4;
    auto slots = vector_slots(stepped);
    auto gslots = gradient_slots(grad);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      for (std::size_t c = 0; c < slots[k]->size(); ++c) (*slots[k])[c] -= eta * (*gslots[k])[c];
    }
    for (std::size_t j = 0; j < item.similar.size(); ++j) {
      if (!(cosine_sim(stepped.similar[j].p, stepped.similar[j].p_prime) >
            cosine_sim(item.similar[j].p, item.similar[j].p_prime))) {
        ++bad;
      }
    }
    for (std::size_t j = 0; j < item.dissimilar.size(); ++j) {
      if (!(cosine_sim(stepped.dissimilar[j].p, stepped.dissimilar[j].p_prime) <
            cosine_sim(item.dissimilar[j].p, item.dissimilar[j].p_prime))) {
        ++bad;
      }
    }
  }
  return flag("single step pulls similar and pushes dissimilar", bad == 0, fmt::format("{} violations", bad));
}

CheckResult sft_mean(int seeds) {
  GaussianSource g(16);
  double err = 0;
  for (int i = 0; i < seeds; ++i) {
    SftSequence seq;
    for (int t = 0; t < 100; ++t) seq.token_logprobs.push_back(-5.0 * g.uniform());
    long double sum = 0;
    for (double x : seq.token_logprobs) sum += x;
    err = std::max(err, std::abs(sft_loss(seq) - static_cast<double>(-sum / 100)));
  }
  return make("sft loss is the negated mean", err, 1e-12);
}

CheckResult descent_trend() {
  DemoTemplate tmpl;
  tmpl.dim = 16;
  const auto trace = descent_demo(2024, 200, 0.1, tmpl);
  const auto& a = trace.front();
  const auto& b = trace.back();
  const bool ok = b.mean_sim_similar > a.mean_sim_similar && b.mean_sim_dissimilar < a.mean_sim_dissimilar &&
                  b.margin > a.margin;
  return flag("descent trend", ok,
              fmt::format("similar {:.4f} -> {:.4f}, dissimilar {:.4f} -> {:.4f}", a.mean_sim_similar,
                          b.mean_sim_similar, a.mean_sim_dissimilar, b.mean_sim_dissimilar));
}

CheckResult pair_rule() {
  int bad = 0;
  for (std::size_t k : {4u, 5u}) {
    rationale::Rationale r;
    for (std::size_t o = 0; o < k; ++o) r.paths.push_back({o, "x", {}});
    GaussianSource g(17);
    PathVectors pv;
    for (std::size_t o = 0; o < k; ++o) {
      pv.original.push_back(random_vector(g, 4));
      pv.counterfactual.push_back(random_vector(g, 4));
    }
    for (std::size_t old = 0; old < k; ++old) {
      for (std::size_t nw = 0; nw < k; ++nw) {
        if (old == nw) continue;
        auto item = select_pairs(r, r, old, nw, pv);
        if (item.dissimilar.size() != 2 || item.similar.size() != k - 2) ++bad;
        for (const auto& p : item.dissimilar) {
          if (p.option != old && p.option != nw) ++bad;
        }
      }
    }
  }
  return flag("pair selection rule", bad == 0, fmt::format("{} violations", bad));
}

}  // namespace

double fd_relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

bool CheckReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

CheckReport run_tpcl_checks(int seeds) {
  if (seeds < 1) fail(ErrorCode::InvalidArgument, "tpcl checks need seeds >= 1");
  CheckReport r;
  r.seeds = seeds;
  r.results = {spot_values(),          complement(seeds),   monotone(seeds),   brute_force(seeds),
               finite_difference(seeds), scale_invariance(seeds), descent_sign(seeds), sft_mean(seeds),
               descent_trend(),        pair_rule()};
  return r;
}

Json to_json(const CheckReport& r) {
  Json j;
  j["seeds"] = r.seeds;
  j["passed"] = r.all_passed();
  j["checks"] = Json::array();
  for (const auto& c : r.results) {
    Json e;
    e["name"] = c.name;
    e["passed"] = c.passed;
    e["max_error"] = c.max_error;
    e["tolerance"] = c.tolerance;
    e["detail"] = c.detail;
    j["checks"].push_back(std::move(e));
  }
  return j;
}

std::string render_report(const CheckReport& r) {
  std::size_t width = 0;
  for (const auto& c : r.results) width = std::max(width, c.name.size());
  std::string out;
  for (const auto& c : r.results) {
    out += fmt::format("{:<4}  {:<{}}", c.passed ? "PASS" : "FAIL", c.name, width);
    if (c.tolerance > 0) out += fmt::format("  max_error={:.3e} tol={:.0e}", c.max_error, c.tolerance);
    if (!c.detail.empty()) out += "  " + c.detail;
    out += '\n';
  }
  out += fmt::format("{} of {} checks passed\n",
                     std::count_if(r.results.begin(), r.results.end(), [](const auto& c) { return c.passed; }),
                     r.results.size());
  return out;
}

}  // namespace poda::tpcl
