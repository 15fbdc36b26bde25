#pragma once

// Thought-path contrastive objective: cosine rewards between matched
// thought-paths of an original and a counterfactual sample, a
// Bradley-Terry preference over (similar, dissimilar) pair combinations,
// and the SFT term it is combined with.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poda/rationale.hpp"

namespace poda::tpcl {

inline constexpr double kDefaultTau = 0.1;

struct ThoughtVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const ThoughtVector&) const = default;
};

// d >= 2, finite entries, nonzero norm. Throws Error{DimensionMismatch,
// NonfiniteValue, ZeroNorm}.
void validate(const ThoughtVector& v);

enum class PairKind { Similar, Dissimilar };

struct PathPair {
  ThoughtVector p;        // thought-path of the original sample
  ThoughtVector p_prime;  // same option in the counterfactual sample
  PairKind kind = PairKind::Similar;
  std::size_t option = 0;

  bool operator==(const PathPair&) const = default;
};

struct TpclBatchItem {
  std::vector<PathPair> similar;     // N
  std::vector<PathPair> dissimilar;  // M
  double tau = kDefaultTau;

  bool operator==(const TpclBatchItem&) const = default;
};

// N, M >= 1, kinds consistent, one dimension throughout, tau > 0.
void validate(const TpclBatchItem& item);

struct SftSequence {
  std::vector<double> token_logprobs;  // each <= 0
};

void validate(const SftSequence& seq);

// Overflow-free scalar forms.
double sigmoid(double x) noexcept;
double softplus(double x) noexcept;  // log(1 + exp(x))

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm(std::span<const double> a) noexcept;

// u.v / (|u||v|) clamped to [-1, 1]. Errors: DimensionMismatch, ZeroNorm.
double cosine_sim(std::span<const double> u, std::span<const double> v);
double cosine_sim(const ThoughtVector& u, const ThoughtVector& v);

// Gradient of cos(u, v) with respect to u.
std::vector<double> cosine_grad(std::span<const double> u, std::span<const double> v);

// sigma((sim_s - sim_d) / tau). Errors: NonpositiveTau.
double bt_probability(double sim_s, double sim_d, double tau);
// -log bt_probability, evaluated as softplus((sim_d - sim_s) / tau).
double pair_loss(double sim_s, double sim_d, double tau);

// Mean pair_loss over all N x M (similar, dissimilar) combinations.
double tpcl_loss(const TpclBatchItem& item);

struct PairGradient {
  std::vector<double> d_p;
  std::vector<double> d_p_prime;

  bool operator==(const PairGradient&) const = default;
};

// Layout mirrors the batch item.
struct TpclGradient {
  std::vector<PairGradient> similar;
  std::vector<PairGradient> dissimilar;

  bool operator==(const TpclGradient&) const = default;
};

TpclGradient tpcl_gradient(const TpclBatchItem& item);

// Negated mean token log-probability. Errors: EmptySequence, NonfiniteValue.
double sft_loss(const SftSequence& seq);

// tpcl_weight * tpcl_loss + sft_loss.
double total_loss(const TpclBatchItem& item, const SftSequence& seq, double tpcl_weight = 1.0);

// Per-option thought-path vectors for one original/counterfactual pair,
// indexed by option.
struct PathVectors {
  std::vector<ThoughtVector> original;
  std::vector<ThoughtVector> counterfactual;
};

// Options old_answer and new_answer change correctness between the two
// samples and form the dissimilar pairs; every other option forms a similar
// pair. Errors: OptionSetMismatch when the rationales or vector lists
// disagree on the option count, InvalidArgument when old == new or a label
// is out of range.
TpclBatchItem select_pairs(const rationale::Rationale& original, const rationale::Rationale& counterfactual,
                           std::size_t old_answer, std::size_t new_answer, const PathVectors& vectors,
                           double tau = kDefaultTau);

enum class DemoInit { Random, Identical };

struct DemoTemplate {
  std::size_t dim = 16;
  std::size_t n_similar = 2;
  std::size_t n_dissimilar = 2;
  double tau = kDefaultTau;
  DemoInit init = DemoInit::Random;
};

struct DemoStep {
  int step = 0;
  double mean_sim_similar = 0;
  double mean_sim_dissimilar = 0;
  double margin = 0;
  double loss = 0;

  bool operator==(const DemoStep&) const = default;
};

// Plain gradient descent on every vector of a random item. Row 0 is the
// initial state, row k the state after k steps. Single-threaded and
// deterministic for a given seed.
std::vector<DemoStep> descent_demo(std::uint64_t seed, int steps, double step_size, const DemoTemplate& tmpl = {});

// Tab-separated with a header row.
std::string render_trace(std::span<const DemoStep> trace);

// Deterministic standard-normal source used by the demo and the checks.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) noexcept : state_(seed) {}
  double next() noexcept;
  double uniform() noexcept;  // [0, 1)

 private:
  std::uint64_t next_u64() noexcept;
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0;
};

ThoughtVector random_vector(GaussianSource& g, std::size_t dim);
TpclBatchItem random_item(GaussianSource& g, std::size_t dim, std::size_t n, std::size_t m, double tau);

}  // namespace poda::tpcl
