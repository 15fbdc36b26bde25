#pragma once

#include <random>
#include <string>

#include "poda/rationale.hpp"

namespace poda::testing {

// Random well-formed rationale: 2-6 options, 1-12 premises, single-line
// texts drawn from a vocabulary that includes format-adjacent words.
inline rationale::Rationale random_rationale(std::mt19937_64& rng) {
  using namespace rationale;
  static const char* words[] = {"the", "premise", "premises", "supports", "option", "answer", "therefore", "because",
                                "not", "unrelated", "contradicts", "42", "3.5", "(x)", "every", "some", "Analyze",
                                "identify", "correct", "optimal", "widget", "crate", "blue", "if", "then", "all",
                                "none", "\"quoted\"", "it's", "e.g.", "x-ray", "cafeé", "50%", "a/b", "[note]"};
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto sentence = [&](std::size_t lo, std::size_t hi) {
    std::string s;
    const std::size_t n = pick(lo, hi);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += words[pick(0, std::size(words) - 1)];
    }
    // capitalised lead word keeps lines from starting with a list marker
    s = "Then " + s;
    return s;
  };
  Rationale r;
  const std::size_t np = pick(1, 12);
  for (std::size_t i = 0; i < np; ++i) r.premises.push_back({static_cast<int>(i + 1), sentence(1, 10) + "."});
  const std::size_t no = pick(2, 6);
  for (std::size_t o = 0; o < no; ++o) {
    ThoughtPath p;
    p.option = o;
    p.reasoning = sentence(1, 15);
    const auto kind = static_cast<RelationKind>(pick(0, 2));
    p.relation.kind = kind;
    if (kind != RelationKind::Unrelated) {
      for (int i = 1; i <= static_cast<int>(np); ++i) {
        if (pick(0, 2) == 0) p.relation.refs.push_back(i);
      }
      if (p.relation.refs.empty()) p.relation.refs.push_back(static_cast<int>(pick(1, np)));
    }
    r.paths.push_back(std::move(p));
  }
  r.conclusion = sentence(1, 12) + (pick(0, 1) ? "." : "");
  r.predicted = pick(0, no - 1);
  return r;
}

}  // namespace poda::testing
