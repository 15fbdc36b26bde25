#include <gtest/gtest.h>

#include <random>

#include "generators.hpp"
#include "poda/error.hpp"
#include "poda/rationale.hpp"
#include "poda/util.hpp"

using namespace poda;
using namespace poda::rationale;

namespace {

ErrorCode parse_error(const std::string& text, std::size_t n) {
  try {
    parse_rationale(text, n);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

const char* kTwoOption =
    "Summarize Premises:\n"
    "1. Cats sleep.\n"
    "2. Dogs bark.\n"
    "Analyze Options:\n"
    "(a) Sleeping cats are mentioned.\n"
    "Identify Premises: Supported by premise 1.\n"
    "(b) Nothing about birds.\n"
    "Identify Premises: Unrelated to the premises.\n"
    "\n"
    "Only (a) holds. Therefore, the optimal correct answer is (a).\n";

}  // namespace

TEST(Rationale, StructuredExampleParses) {
  const auto text = util::read_file(std::filesystem::path(PODA_TEST_FIXTURES) / "structured_example.txt");
  const Rationale r = parse_rationale(text, 4);
  EXPECT_EQ(r.predicted, 1u);
  ASSERT_EQ(r.premises.size(), 3u);
  EXPECT_EQ(r.premises[1].text, "[Premise 2]");
  ASSERT_EQ(r.paths.size(), 4u);
  EXPECT_EQ(r.paths[0].relation.kind, RelationKind::Unrelated);
  EXPECT_EQ(r.paths[1].relation, (PremiseRelation{RelationKind::Supported, {2, 3}}));
  EXPECT_EQ(r.paths[2].relation.kind, RelationKind::Unrelated);
  EXPECT_EQ(r.paths[3].relation, (PremiseRelation{RelationKind::Contradicted, {1}}));
  EXPECT_EQ(r.paths[3].reasoning, "[Thought-path 4]");
  EXPECT_EQ(r.conclusion, "[A summary of thought-paths].");
}

TEST(Rationale, PartitionFollowsAnswerRelation) {
  const auto text = util::read_file(std::filesystem::path(PODA_TEST_FIXTURES) / "structured_example.txt");
  const auto part = partition_premises(parse_rationale(text, 4), 1);
  EXPECT_EQ(part.linked, (std::vector<int>{2, 3}));
  EXPECT_EQ(part.unlinked, (std::vector<int>{1}));
}

TEST(Rationale, TolerantSyntax) {
  const std::string text =
      "Some preamble the model wrote.\n"
      "**Summarize Premises:**\n"
      "1) Cats sleep.\n"
      "2) Dogs bark\n"
      "   loudly at night.\n"
      "3) Birds sing.\n"
      "**Analyze Options:**\n"
      "(A) Cats are covered.\n"
      "Identify premise: supported by Premise 1, premise 3.\n"
      "(B) Barking is denied.\n"
      "identify premises: Contradicted by premises 1, 2 and 3.\n"
      "\n"
      "Therefore, the optimal correct answer is **(A)**.";
  const Rationale r = parse_rationale(text, 2);
  EXPECT_EQ(r.premises[1].text, "Dogs bark loudly at night.");
  EXPECT_EQ(r.paths[0].relation, (PremiseRelation{RelationKind::Supported, {1, 3}}));
  EXPECT_EQ(r.paths[1].relation, (PremiseRelation{RelationKind::Contradicted, {1, 2, 3}}));
  EXPECT_EQ(r.predicted, 0u);
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

TEST(Rationale, ParsesMinimal) {
  const Rationale r = parse_rationale(kTwoOption, 2);
  EXPECT_EQ(r.predicted, 0u);
  EXPECT_EQ(r.conclusion, "Only (a) holds.");
}

TEST(Rationale, ErrorClasses) {
  const std::string t = kTwoOption;
  EXPECT_EQ(parse_error(replace(t, "Summarize Premises:\n", ""), 2), ErrorCode::MissingSection);
  EXPECT_EQ(parse_error(replace(t, "Analyze Options:\n", ""), 2), ErrorCode::MissingSection);
  EXPECT_EQ(parse_error(replace(t, "2. Dogs", "3. Dogs"), 2), ErrorCode::MalformedPremiseList);
  EXPECT_EQ(parse_error(replace(t, "Supported by premise 1.", "Mentioned somewhere."), 2), ErrorCode::MalformedRelation);
  EXPECT_EQ(parse_error(replace(t, "Supported by premise 1.", "Supported by and contradicted by premise 1."), 2),
            ErrorCode::MalformedRelation);
  EXPECT_EQ(parse_error(replace(t, "Identify Premises: Supported by premise 1.\n", ""), 2), ErrorCode::MalformedRelation);
  EXPECT_EQ(parse_error(t, 3), ErrorCode::PathCountMismatch);
  EXPECT_EQ(parse_error(replace(t, "(b) Nothing", "(c) Nothing"), 2), ErrorCode::PathCountMismatch);
  EXPECT_EQ(parse_error(replace(t, "premise 1.", "premise 7."), 2), ErrorCode::DanglingPremiseRef);
  EXPECT_EQ(parse_error(replace(t, "Therefore, the optimal correct answer is (a).", "So it is a."), 2), ErrorCode::NoFinalAnswer);
  EXPECT_EQ(parse_error(replace(t, "Only (a) holds.", "The optimal correct answer is (b)."), 2),
            ErrorCode::AmbiguousFinalAnswer);
}

TEST(Rationale, FinalAnswerSearch) {
  EXPECT_EQ(find_final_answer("so the optimal correct answer is: (C)", 4), std::optional<std::size_t>(2));
  EXPECT_EQ(find_final_answer("no label here", 4), std::nullopt);
  EXPECT_EQ(find_final_answer("the optimal correct answer is (z)", 4), std::nullopt);
  EXPECT_THROW(find_final_answer("the optimal correct answer is (a). the optimal correct answer is (b).", 4), Error);
}

TEST(Rationale, RelationRendering) {
  EXPECT_EQ(render_relation({RelationKind::Unrelated, {}}), "Unrelated to the premises.");
  EXPECT_EQ(render_relation({RelationKind::Supported, {2, 3}}), "Supported by premises 2 and 3.");
  EXPECT_EQ(render_relation({RelationKind::Contradicted, {1}}), "Contradicted by premise 1.");
  EXPECT_EQ(render_relation({RelationKind::Supported, {1, 2, 4}}), "Supported by premises 1, 2 and 4.");
}

TEST(Rationale, RenderIsCanonical) {
  const Rationale r = parse_rationale(kTwoOption, 2);
  EXPECT_EQ(render_rationale(r), kTwoOption);
}

TEST(Rationale, RoundTripGenerated) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Rationale r = poda::testing::random_rationale(rng);
    const std::string text = render_rationale(r);
    Rationale back;
    ASSERT_NO_THROW(back = parse_rationale(text, r.paths.size())) << text;
    ASSERT_EQ(back, r) << text;
    ASSERT_EQ(render_rationale(back), text);
  }
}

TEST(Rationale, Labels) {
  EXPECT_EQ(option_label(0), 'a');
  EXPECT_EQ(option_tag(25), "(z)");
  EXPECT_EQ(label_index('D'), std::optional<std::size_t>(3));
  EXPECT_EQ(label_index('!'), std::nullopt);
}
