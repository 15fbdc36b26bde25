#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poda::rationale {

inline constexpr std::size_t kMaxOptions = 26;
inline constexpr std::size_t kMaxPremises = 99;

// 0 -> 'a', 1 -> 'b', ...
char option_label(std::size_t index);
// "(b)"
std::string option_tag(std::size_t index);
// Accepts upper or lower case.
std::optional<std::size_t> label_index(char label) noexcept;

struct Premise {
  int index = 0;  // 1-based
  std::string text;

  bool operator==(const Premise&) const = default;
};

enum class RelationKind { Supported, Contradicted, Unrelated };

std::string_view relation_kind_name(RelationKind kind) noexcept;

struct PremiseRelation {
  RelationKind kind = RelationKind::Unrelated;
  std::vector<int> refs;  // strictly increasing; empty iff Unrelated

  bool operator==(const PremiseRelation&) const = default;
};

struct ThoughtPath {
  std::size_t option = 0;
  std::string reasoning;
  PremiseRelation relation;

  bool operator==(const ThoughtPath&) const = default;
};

struct Rationale {
  std::vector<Premise> premises;
  std::vector<ThoughtPath> paths;
  std::string conclusion;  // summary text preceding the final-answer sentence
  std::size_t predicted = 0;

  bool operator==(const Rationale&) const = default;
};

// Throws Error{InvalidArgument} describing the first broken invariant.
void validate(const Rationale& r);

// Parses model output in the structured rationale format:
//
//   Summarize Premises:
//   1. ...
//   Analyze Options:
//   (a) ...
//   Identify Premises: Supported by premises 2 and 3.
//   ...
//   <summary>. Therefore, the optimal correct answer is (b).
//
// Header matching ignores case, markdown emphasis and surrounding blanks.
// Relation lines accept "premise"/"premises", comma and "and" separated
// references, and repeated "premise N" forms. Anything before the
// "Summarize Premises" header is ignored.
//
// Throws Error with one of MissingSection, MalformedPremiseList,
// MalformedRelation, PathCountMismatch, DanglingPremiseRef, NoFinalAnswer,
// AmbiguousFinalAnswer.
Rationale parse_rationale(std::string_view text, std::size_t n_options);

// Label asserted by "the optimal correct answer is (x)" phrasing anywhere in
// `text`. nullopt if absent; Error{AmbiguousFinalAnswer} if two different
// labels are asserted. Labels at or beyond `n_options` are ignored.
std::optional<std::size_t> find_final_answer(std::string_view text, std::size_t n_options);

// Canonical text with LF line endings. Byte-stable for a given Rationale.
std::string render_rationale(const Rationale& r);

// "Supported by premises 2 and 3." etc.
std::string render_relation(const PremiseRelation& relation);

struct PremisePartition {
  std::vector<int> linked;    // cited by the answer option's relation
  std::vector<int> unlinked;  // every other premise index, ascending
};

PremisePartition partition_premises(const Rationale& r, std::size_t answer);

}  // namespace poda::rationale
