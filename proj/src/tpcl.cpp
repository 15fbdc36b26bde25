#include "poda/tpcl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "poda/error.hpp"

namespace poda::tpcl {
namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::NonpositiveTau, fmt::format("tau must be > 0, got {}", tau));
}

void check_kind(const std::vector<PathPair>& pairs, PairKind kind, const char* what) {
  for (const auto& p : pairs) {
    if (p.kind != kind) fail(ErrorCode::InvalidArgument, fmt::format("{} list holds a pair of the other kind", what));
  }
}

void axpy(double a, std::span<const double> x, std::vector<double>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

void validate(const ThoughtVector& v) {
  if (v.dim() < 2) fail(ErrorCode::DimensionMismatch, fmt::format("thought vector needs d >= 2, got {}", v.dim()));
  for (double x : v.values) {
    if (!std::isfinite(x)) fail(ErrorCode::NonfiniteValue, "thought vector has a non-finite entry");
  }
  if (norm(v.values) == 0.0) fail(ErrorCode::ZeroNorm, "thought vector has zero norm");
}

void validate(const TpclBatchItem& item) {
  check_tau(item.tau);
  if (item.similar.empty() || item.dissimilar.empty()) {
    fail(ErrorCode::InvalidArgument, "batch item needs at least one similar and one dissimilar pair");
  }
  check_kind(item.similar, PairKind::Similar, "similar");
  check_kind(item.dissimilar, PairKind::Dissimilar, "dissimilar");
  const std::size_t d = item.similar.front().p.dim();
  for (const auto* list : {&item.similar, &item.dissimilar}) {
    for (const auto& pair : *list) {
      validate(pair.p);
      validate(pair.p_prime);
      if (pair.p.dim() != d || pair.p_prime.dim() != d) {
        fail(ErrorCode::DimensionMismatch, "batch item mixes vector dimensions");
      }
    }
  }
}

void validate(const SftSequence& seq) {
  if (seq.token_logprobs.empty()) fail(ErrorCode::EmptySequence, "sft sequence has no tokens");
  for (double x : seq.token_logprobs) {
    if (!std::isfinite(x)) fail(ErrorCode::NonfiniteValue, "sft sequence has a non-finite log-probability");
    if (x > 0.0) fail(ErrorCode::InvalidArgument, fmt::format("log-probability {} is positive", x));
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::DimensionMismatch, fmt::format("cosine over dimensions {} and {}", u.size(), v.size()));
  }
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::ZeroNorm, "cosine of a zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double cosine_sim(const ThoughtVector& u, const ThoughtVector& v) { return cosine_sim(u.values, v.values); }

std::vector<double> cosine_grad(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorCode::DimensionMismatch, "cosine gradient over mismatched dimensions");
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::ZeroNorm, "cosine gradient of a zero vector");
  // unclamped value keeps the gradient consistent with the function near +-1
  const double c = dot(u, v) / (nu * nv);
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) g[i] = v[i] / (nu * nv) - c * u[i] / (nu * nu);
  return g;
}

double bt_probability(double sim_s, double sim_d, double tau) {
  check_tau(tau);
  return sigmoid((sim_s - sim_d) / tau);
}

double pair_loss(double sim_s, double sim_d, double tau) {
  check_tau(tau);
  return softplus((sim_d - sim_s) / tau);
}

double tpcl_loss(const TpclBatchItem& item) {
  validate(item);
  std::vector<double> sd;
  for (const auto& d : item.dissimilar) sd.push_back(cosine_sim(d.p, d.p_prime));
  double total = 0;
  for (const auto& s : item.similar) {
    const double ss = cosine_sim(s.p, s.p_prime);
    for (double x : sd) total += pair_loss(ss, x, item.tau);
  }
  return total / static_cast<double>(item.similar.size() * item.dissimilar.size());
}

TpclGradient tpcl_gradient(const TpclBatchItem& item) {
  validate(item);
  const std::size_t n = item.similar.size(), m = item.dissimilar.size();
  const double inv_tau = 1.0 / item.tau;
  const double scale = 1.0 / static_cast<double>(n * m);

  std::vector<double> ss(n), sd(m);
  for (std::size_t j = 0; j < n; ++j) ss[j] = cosine_sim(item.similar[j].p, item.similar[j].p_prime);
  for (std::size_t i = 0; i < m; ++i) sd[i] = cosine_sim(item.dissimilar[i].p, item.dissimilar[i].p_prime);

  // dL/dsim_s[j] and dL/dsim_d[i], summed over the combinations each sim
  // takes part in
  std::vector<double> ws(n, 0.0), wd(m, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const double w = inv_tau * sigmoid((sd[i] - ss[j]) * inv_tau) * scale;
      ws[j] -= w;
      wd[i] += w;
    }
  }

  auto pair_grad = [](const PathPair& pr, double w) {
    PairGradient g{std::vector<double>(pr.p.dim(), 0.0), std::vector<double>(pr.p.dim(), 0.0)};
    axpy(w, cosine_grad(pr.p.values, pr.p_prime.values), g.d_p);
    axpy(w, cosine_grad(pr.p_prime.values, pr.p.values), g.d_p_prime);
    return g;
  };
  TpclGradient out;
  for (std::size_t j = 0; j < n; ++j) out.similar.push_back(pair_grad(item.similar[j], ws[j]));
  for (std::size_t i = 0; i < m; ++i) out.dissimilar.push_back(pair_grad(item.dissimilar[i], wd[i]));
  return out;
}

double sft_loss(const SftSequence& seq) {
  validate(seq);
  double s = 0;
  for (double x : seq.token_logprobs) s += x;
  return -s / static_cast<double>(seq.token_logprobs.size());
}

double total_loss(const TpclBatchItem& item, const SftSequence& seq, double tpcl_weight) {
  if (!std::isfinite(tpcl_weight) || tpcl_weight < 0) fail(ErrorCode::InvalidArgument, "tpcl weight must be >= 0");
  return tpcl_weight * tpcl_loss(item) + sft_loss(seq);
}

TpclBatchItem select_pairs(const rationale::Rationale& original, const rationale::Rationale& counterfactual,
                           std::size_t old_answer, std::size_t new_answer, const PathVectors& vectors, double tau) {
  const std::size_t k = original.paths.size();
  if (counterfactual.paths.size() != k) {
    fail(ErrorCode::OptionSetMismatch,
         fmt::format("original covers {} options, counterfactual {}", k, counterfactual.paths.size()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (original.paths[i].option != i || counterfactual.paths[i].option != i) {
      fail(ErrorCode::OptionSetMismatch, "thought-paths are not in option order");
    }
  }
  if (vectors.original.size() != k || vectors.counterfactual.size() != k) {
    fail(ErrorCode::OptionSetMismatch, fmt::format("expected {} vectors per sample, got {} and {}", k,
                                                   vectors.original.size(), vectors.counterfactual.size()));
  }
  if (old_answer >= k || new_answer >= k) fail(ErrorCode::InvalidArgument, "answer label out of range");
  if (old_answer == new_answer) fail(ErrorCode::InvalidArgument, "old and new answers must differ");
  check_tau(tau);

  TpclBatchItem item;
  item.tau = tau;
  for (std::size_t o = 0; o < k; ++o) {
    const bool flipped = o == old_answer || o == new_answer;
    PathPair pair{vectors.original[o], vectors.counterfactual[o], flipped ? PairKind::Dissimilar : PairKind::Similar, o};
    (flipped ? item.dissimilar : item.similar).push_back(std::move(pair));
  }
  validate(item);
  return item;
}

std::uint64_t GaussianSource::next_u64() noexcept {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double GaussianSource::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double GaussianSource::next() noexcept {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  have_spare_ = true;
  return r * std::cos(th);
}

ThoughtVector random_vector(GaussianSource& g, std::size_t dim) {
  ThoughtVector v;
  v.values.resize(dim);
  for (auto& x : v.values) x = g.next();
  return v;
}

TpclBatchItem random_item(GaussianSource& g, std::size_t dim, std::size_t n, std::size_t m, double tau) {
  TpclBatchItem item;
  item.tau = tau;
  for (std::size_t j = 0; j < n; ++j) item.similar.push_back({random_vector(g, dim), random_vector(g, dim), PairKind::Similar, j});
  for (std::size_t i = 0; i < m; ++i) {
    item.dissimilar.push_back({random_vector(g, dim), random_vector(g, dim), PairKind::Dissimilar, n + i});
  }
  return item;
}

namespace {

DemoStep measure(const TpclBatchItem& item, int step) {
  DemoStep s;
  s.step = step;
  for (const auto& p : item.similar) s.mean_sim_similar += cosine_sim(p.p, p.p_prime);
  for (const auto& p : item.dissimilar) s.mean_sim_dissimilar += cosine_sim(p.p, p.p_prime);
  s.mean_sim_similar /= static_cast<double>(item.similar.size());
  s.mean_sim_dissimilar /= static_cast<double>(item.dissimilar.size());
  s.margin = s.mean_sim_similar - s.mean_sim_dissimilar;
  s.loss = tpcl_loss(item);
  return s;
}

}  // namespace

std::vector<DemoStep> descent_demo(std::uint64_t seed, int steps, double step_size, const DemoTemplate& tmpl) {
  if (steps < 1) fail(ErrorCode::InvalidArgument, "descent demo needs steps >= 1");
  if (!(step_size > 0.0)) fail(ErrorCode::InvalidArgument, "descent demo needs a positive step size");
  if (tmpl.dim < 2 || tmpl.n_similar < 1 || tmpl.n_dissimilar < 1) {
    fail(ErrorCode::InvalidArgument, "descent demo template needs d >= 2 and at least one pair of each kind");
  }
  GaussianSource g(seed);
  TpclBatchItem item;
  if (tmpl.init == DemoInit::Identical) {
    const ThoughtVector v = random_vector(g, tmpl.dim);
    item.tau = tmpl.tau;
    for (std::size_t j = 0; j < tmpl.n_similar; ++j) item.similar.push_back({v, v, PairKind::Similar, j});
    for (std::size_t i = 0; i < tmpl.n_dissimilar; ++i) {
      item.dissimilar.push_back({v, v, PairKind::Dissimilar, tmpl.n_similar + i});
    }
  } else {
    item = random_item(g, tmpl.dim, tmpl.n_similar, tmpl.n_dissimilar, tmpl.tau);
  }

  std::vector<DemoStep> trace;
  trace.reserve(static_cast<std::size_t>(steps) + 1);
  trace.push_back(measure(item, 0));
  for (int k = 1; k <= steps; ++k) {
    const TpclGradient grad = tpcl_gradient(item);
    auto apply = [step_size](std::vector<PathPair>& pairs, const std::vector<PairGradient>& gs) {
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        axpy(-step_size, gs[i].d_p, pairs[i].p.values);
        axpy(-step_size, gs[i].d_p_prime, pairs[i].p_prime.values);
      }
    };
    apply(item.similar, grad.similar);
    apply(item.dissimilar, grad.dissimilar);
    trace.push_back(measure(item, k));
  }
  return trace;
}

std::string render_trace(std::span<const DemoStep> trace) {
  std::string out = "step\tmean_sim_similar\tmean_sim_dissimilar\tmargin\tloss\n";
  for (const auto& s : trace) {
    out += fmt::format("{}\t{:.12f}\t{:.12f}\t{:.12f}\t{:.12f}\n", s.step, s.mean_sim_similar, s.mean_sim_dissimilar,
                       s.margin, s.loss);
  }
  return out;
}

}  // namespace poda::tpcl
