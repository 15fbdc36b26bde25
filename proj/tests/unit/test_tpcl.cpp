#include <gtest/gtest.h>

#include <cmath>

#include "poda/embedding.hpp"
#include "poda/error.hpp"
#include "poda/tpcl.hpp"
#include "poda/tpcl_checks.hpp"
#include "poda/tpcl_kernels.hpp"
#include "scripted.hpp"

using namespace poda;
using namespace poda::tpcl;

namespace {

ThoughtVector tv(std::vector<double> v) { return ThoughtVector{std::move(v)}; }

PathPair pair(std::vector<double> a, std::vector<double> b, PairKind k) { return PathPair{tv(a), tv(b), k, 0}; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // unreachable in these tests
}

}  // namespace

TEST(Tpcl, ScalarSpotValues) {
  EXPECT_NEAR(sigmoid(1.0), 0.7310585786, 1e-10);
  EXPECT_NEAR(-std::log(sigmoid(1.0)), 0.3132616875, 1e-10);
  EXPECT_NEAR(softplus(20.0), 20.000000002061154, 1e-12);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isfinite(softplus(1e6)));
  EXPECT_EQ(sigmoid(-1e6), 0.0);
  EXPECT_NEAR(cosine_sim(tv({1, 2, 3}), tv({4, 5, 6})), 0.974631846197, 1e-12);
}

TEST(Tpcl, PairLossMatchesNegLogProbability) {
  EXPECT_NEAR(pair_loss(0.6, 0.5, 0.1), 0.3132616875, 1e-10);
  EXPECT_NEAR(bt_probability(0.6, 0.5, 0.1), 0.7310585786, 1e-10);
  EXPECT_EQ(code_of([] { pair_loss(0.1, 0.2, 0.0); }), ErrorCode::NonpositiveTau);
}

TEST(Tpcl, WorkedExample) {
  TpclBatchItem item;
  item.similar = {pair({1, 0}, {1, 0}, PairKind::Similar)};
  item.dissimilar = {pair({1, 0}, {0, 1}, PairKind::Dissimilar)};
  item.tau = 0.1;
  // sim_s = 1, sim_d = 0 -> softplus(-10)
  EXPECT_NEAR(tpcl_loss(item), std::log1p(std::exp(-10.0)), 1e-15);
}

TEST(Tpcl, MeanOverCombinations) {
  TpclBatchItem item;
  item.similar = {pair({1, 0}, {1, 0}, PairKind::Similar), pair({1, 0}, {1, 1}, PairKind::Similar)};
  item.dissimilar = {pair({1, 0}, {0, 1}, PairKind::Dissimilar), pair({1, 0}, {-1, 1}, PairKind::Dissimilar),
                     pair({0, 1}, {1, 2}, PairKind::Dissimilar)};
  item.tau = 0.3;
  double sum = 0;
  for (const auto& s : item.similar)
    for (const auto& d : item.dissimilar) sum += pair_loss(cosine_sim(s.p, s.p_prime), cosine_sim(d.p, d.p_prime), 0.3);
  EXPECT_NEAR(tpcl_loss(item), sum / 6.0, 1e-14);
}

TEST(Tpcl, ValidationErrors) {
  EXPECT_EQ(code_of([] { cosine_sim(tv({1, 2}), tv({1, 2, 3})); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { cosine_sim(tv({0, 0}), tv({1, 2})); }), ErrorCode::ZeroNorm);
  EXPECT_EQ(code_of([] { validate(tv({1, NAN})); }), ErrorCode::NonfiniteValue);
  EXPECT_EQ(code_of([] { sft_loss(SftSequence{}); }), ErrorCode::EmptySequence);
  TpclBatchItem empty;
  EXPECT_THROW(tpcl_loss(empty), Error);
}

TEST(Tpcl, GradientMatchesFiniteDifferences) {
  GaussianSource g(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto item = random_item(g, 8, 2, 3, 0.1);
    auto grad = tpcl_gradient(item);
    auto probe = [&](std::vector<double>& coord, double analytic) {
      const double keep = coord.back();
      coord.back() = keep + kFdStep;
      const double up = tpcl_loss(item);
      coord.back() = keep - kFdStep;
      const double down = tpcl_loss(item);
      coord.back() = keep;
      EXPECT_LT(fd_relative_error(analytic, (up - down) / (2 * kFdStep)), kFdTolerance);
    };
    probe(item.similar[1].p.values, grad.similar[1].d_p.back());
    probe(item.dissimilar[2].p_prime.values, grad.dissimilar[2].d_p_prime.back());
  }
}

TEST(Tpcl, SftAndTotal) {
  SftSequence seq{{-1, -2, -3}};
  EXPECT_DOUBLE_EQ(sft_loss(seq), 2.0);
  TpclBatchItem item;
  item.similar = {pair({1, 0}, {1, 0}, PairKind::Similar)};
  item.dissimilar = {pair({1, 0}, {1, 0}, PairKind::Dissimilar)};
  EXPECT_NEAR(total_loss(item, seq), std::log(2.0) + 2.0, 1e-12);
  EXPECT_NEAR(total_loss(item, seq, 0.5), 0.5 * std::log(2.0) + 2.0, 1e-12);
}

TEST(Tpcl, SelectPairs) {
  auto samples = poda::testing::make_samples(2);
  auto r = poda::testing::scripted_rationale(samples[1], 1);
  auto cf = poda::testing::scripted_rationale(samples[1], 1);
  PathVectors vecs;
  for (int i = 0; i < 4; ++i) {
    vecs.original.push_back(tv({1.0 + i, 1.0}));
    vecs.counterfactual.push_back(tv({1.0, 1.0 + i}));
  }
  auto item = select_pairs(r, cf, 1, 3, vecs);
  ASSERT_EQ(item.similar.size(), 2u);
  ASSERT_EQ(item.dissimilar.size(), 2u);
  EXPECT_EQ(item.similar[0].option, 0u);
  EXPECT_EQ(item.similar[1].option, 2u);
  EXPECT_EQ(item.dissimilar[0].option, 1u);
  EXPECT_EQ(item.dissimilar[1].option, 3u);
  EXPECT_EQ(item.dissimilar[1].p, vecs.original[3]);
  EXPECT_EQ(item.dissimilar[1].p_prime, vecs.counterfactual[3]);
  EXPECT_EQ(code_of([&] { select_pairs(r, cf, 2, 2, vecs); }), ErrorCode::InvalidArgument);
  vecs.counterfactual.pop_back();
  EXPECT_EQ(code_of([&] { select_pairs(r, cf, 1, 3, vecs); }), ErrorCode::OptionSetMismatch);
}

TEST(Tpcl, DescentDemoDeterministicAndImproving) {
  auto a = descent_demo(2024, 200, 0.1);
  auto b = descent_demo(2024, 200, 0.1);
  ASSERT_EQ(a.size(), 201u);
  EXPECT_EQ(a, b);
  EXPECT_GT(a.back().margin, a.front().margin);
  EXPECT_LT(a.back().loss, a.front().loss);
  auto text = render_trace(a);
  EXPECT_EQ(text.substr(0, text.find('\n')), "step\tmean_sim_similar\tmean_sim_dissimilar\tmargin\tloss");
}

TEST(Tpcl, IdenticalInitStartsAtZeroMargin) {
  DemoTemplate t;
  t.init = DemoInit::Identical;
  auto trace = descent_demo(1, 1, 0.1, t);
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_NEAR(trace[0].margin, 0.0, 1e-12);
  EXPECT_NEAR(trace[0].loss, std::log(2.0), 1e-12);
}

TEST(Tpcl, OmpMatchesSerialExactly) {
  GaussianSource g(5);
  std::vector<TpclBatchItem> batch;
  for (int i = 0; i < 64; ++i) batch.push_back(random_item(g, 32, 2, 2, 0.1));
  EXPECT_EQ(batch_loss_serial(batch), batch_loss_omp(batch, 4));
  EXPECT_EQ(batch_gradient_serial(batch), batch_gradient_omp(batch, 4));
  std::vector<TpclBatchItem> none;
  EXPECT_THROW(batch_loss_omp(none), Error);
}

TEST(Tpcl, PropertySuitePasses) {
  auto report = run_tpcl_checks(20);
  EXPECT_TRUE(report.all_passed()) << render_report(report);
  EXPECT_EQ(report.results.size(), 10u);
}

TEST(Embedding, HashProviderIsDeterministic) {
  HashEmbeddingProvider p(32);
  std::vector<std::string> texts{"The cat sat.", "the CAT sat.", "A dog ran far away."};
  auto a = p.embed(texts);
  auto b = HashEmbeddingProvider(32).embed(texts);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].dim(), 32u);
  EXPECT_GT(cosine_sim(a[0], a[1]), cosine_sim(a[0], a[2]));
  std::vector<std::string> bad{""};
  EXPECT_EQ(code_of([&] { p.embed(bad); }), ErrorCode::InvalidArgument);
}

TEST(Embedding, PathsFollowOptionOrder) {
  auto s = poda::testing::make_samples(1)[0];
  auto r = poda::testing::scripted_rationale(s, 0);
  HashEmbeddingProvider p(16);
  auto v = embed_paths(p, r);
  EXPECT_EQ(v.size(), 4u);
}
