#include "poda/rationale.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <fmt/format.h>

#include "poda/error.hpp"
#include "poda/util.hpp"

namespace poda::rationale {
namespace {

using util::to_lower;
using util::trim;

constexpr std::string_view kFinalAnswerLead = "Therefore, the optimal correct answer is ";

bool is_decoration(char c) { return c == '*' || c == '#' || c == '_' || std::isspace(static_cast<unsigned char>(c)); }

std::string_view strip_decoration(std::string_view s) {
  while (!s.empty() && is_decoration(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_decoration(s.back())) s.remove_suffix(1);
  return s;
}

bool starts_with_words(std::string_view line, std::initializer_list<std::string_view> prefixes) {
  std::string lower = to_lower(strip_decoration(line));
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](std::string_view p) { return lower.rfind(p, 0) == 0; });
}

bool is_summarize_header(std::string_view line) {
  return starts_with_words(line, {"summarize premise", "summarise premise", "summarize the premise"});
}

bool is_analyze_header(std::string_view line) {
  return starts_with_words(line, {"analyze option", "analyse option", "analyze the option", "analyze each option"});
}

// "12. text" or "12) text"
std::optional<std::pair<int, std::string_view>> match_premise_line(std::string_view line) {
  std::string_view s = trim(line);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0 || i > 3 || i >= s.size() || (s[i] != '.' && s[i] != ')')) return std::nullopt;
  int number = std::stoi(std::string(s.substr(0, i)));
  return std::make_pair(number, trim(s.substr(i + 1)));
}

// "(b) text", optionally wrapped in markdown emphasis.
std::optional<std::pair<char, std::string_view>> match_path_marker(std::string_view line) {
  std::string_view s = trim(line);
  while (!s.empty() && s.front() == '*') s.remove_prefix(1);
  if (s.size() < 3 || s[0] != '(' || s[2] != ')' || !std::isalpha(static_cast<unsigned char>(s[1]))) {
    return std::nullopt;
  }
  char label = s[1];
  s.remove_prefix(3);
  while (!s.empty() && s.front() == '*') s.remove_prefix(1);
  return std::make_pair(label, trim(s));
}

// "Identify Premises: ..." (also "Identify Premise :", emphasis tolerated)
std::optional<std::string_view> match_identify_line(std::string_view line) {
  std::string_view s = trim(line);
  while (!s.empty() && s.front() == '*') s.remove_prefix(1);
  std::string lower = to_lower(s);
  if (lower.rfind("identify premise", 0) != 0) return std::nullopt;
  std::size_t colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  std::string_view head = s.substr(0, colon);
  for (char c : head.substr(std::string_view("identify premise").size())) {
    if (!(c == 's' || c == 'S' || c == '*' || std::isspace(static_cast<unsigned char>(c)))) return std::nullopt;
  }
  std::string_view rest = s.substr(colon + 1);
  while (!rest.empty() && (rest.front() == '*' || std::isspace(static_cast<unsigned char>(rest.front())))) {
    rest.remove_prefix(1);
  }
  return trim(rest);
}

PremiseRelation parse_relation(std::string_view phrase, std::size_t n_premises, char label) {
  std::string lower = to_lower(phrase);
  auto has = [&](std::string_view word) { return lower.find(word) != std::string::npos; };
  bool unrelated = has("unrelated") || has("not related") || has("irrelevant") || has("no premise");
  bool supported = !unrelated && has("support");
  bool contradicted = !unrelated && has("contradict");
  if (static_cast<int>(unrelated) + static_cast<int>(supported) + static_cast<int>(contradicted) != 1) {
    fail(ErrorCode::MalformedRelation,
         fmt::format("option ({}): cannot classify relation \"{}\"", label, phrase));
  }
  PremiseRelation rel;
  if (unrelated) return rel;
  rel.kind = supported ? RelationKind::Supported : RelationKind::Contradicted;
  for (std::size_t i = 0; i < lower.size();) {
    if (!std::isdigit(static_cast<unsigned char>(lower[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lower.size() && std::isdigit(static_cast<unsigned char>(lower[j]))) ++j;
    if (j - i > 3) fail(ErrorCode::DanglingPremiseRef, fmt::format("option ({}): premise reference out of range", label));
    int ref = std::stoi(lower.substr(i, j - i));
    if (ref < 1 || static_cast<std::size_t>(ref) > n_premises) {
      fail(ErrorCode::DanglingPremiseRef,
           fmt::format("option ({}) cites premise {} but only {} premises exist", label, ref, n_premises));
    }
    rel.refs.push_back(ref);
    i = j;
  }
  if (rel.refs.empty()) {
    fail(ErrorCode::MalformedRelation, fmt::format("option ({}): relation \"{}\" cites no premise", label, phrase));
  }
  std::sort(rel.refs.begin(), rel.refs.end());
  rel.refs.erase(std::unique(rel.refs.begin(), rel.refs.end()), rel.refs.end());
  return rel;
}

const std::regex& final_answer_regex() {
  static const std::regex re(R"(optimal\s+correct\s+answer\s+is\s*:?\s*\**\(\s*([A-Za-z])\s*\))",
                             std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return re;
}

struct FinalAnswerMatch {
  std::size_t label = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<FinalAnswerMatch> final_answer_matches(std::string_view text, std::size_t n_options) {
  std::vector<FinalAnswerMatch> out;
  using It = std::string_view::const_iterator;
  std::regex_iterator<It> it(text.begin(), text.end(), final_answer_regex()), last;
  for (; it != last; ++it) {
    auto idx = label_index((*it)[1].str()[0]);
    if (!idx || *idx >= n_options) continue;
    auto begin = static_cast<std::size_t>(it->position(0));
    out.push_back({*idx, begin, begin + static_cast<std::size_t>(it->length(0))});
  }
  return out;
}

// Removes the sentence holding the last final-answer assertion.
std::string strip_final_sentence(std::string_view text, std::size_t n_options) {
  auto matches = final_answer_matches(text, n_options);
  if (matches.empty()) return std::string(trim(text));
  const auto& m = matches.back();
  std::size_t start = 0;
  for (std::size_t i = m.begin; i-- > 0;) {
    char c = text[i];
    if (c == '\n' || ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
                      std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      start = i + 1;
      break;
    }
  }
  std::size_t end = m.end;
  while (end < text.size() && (text[end] == '.' || text[end] == '*' || text[end] == '!')) ++end;
  std::string head(trim(text.substr(0, start)));
  std::string_view tail = trim(text.substr(end));
  if (!tail.empty()) {
    if (!head.empty()) head += "\n";
    head += tail;
  }
  return head;
}

}  // namespace

char option_label(std::size_t index) {
  if (index >= kMaxOptions) fail(ErrorCode::InvalidArgument, fmt::format("option index {} out of range", index));
  return static_cast<char>('a' + index);
}

std::string option_tag(std::size_t index) { return fmt::format("({})", option_label(index)); }

std::optional<std::size_t> label_index(char label) noexcept {
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(label)));
  if (c < 'a' || c > 'z') return std::nullopt;
  return static_cast<std::size_t>(c - 'a');
}

std::string_view relation_kind_name(RelationKind kind) noexcept {
  switch (kind) {
    case RelationKind::Supported: return "Supported";
    case RelationKind::Contradicted: return "Contradicted";
    case RelationKind::Unrelated: return "Unrelated";
  }
  return "Unrelated";
}

void validate(const Rationale& r) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, "invalid rationale: " + what); };
  if (r.premises.empty() || r.premises.size() > kMaxPremises) bad("premise count must be in 1..99");
  for (std::size_t i = 0; i < r.premises.size(); ++i) {
    const auto& p = r.premises[i];
    if (p.index != static_cast<int>(i + 1)) bad("premise indices must be consecutive from 1");
    if (p.text.empty() || trim(p.text) != p.text || p.text.find('\n') != std::string::npos) {
      bad(fmt::format("premise {} text must be a non-empty trimmed single line", p.index));
    }
  }
  if (r.paths.size() < 2 || r.paths.size() > kMaxOptions) bad("path count must be in 2..26");
  for (std::size_t i = 0; i < r.paths.size(); ++i) {
    const auto& path = r.paths[i];
    if (path.option != i) bad("paths must be in option order");
    if (path.reasoning.empty() || trim(path.reasoning) != path.reasoning) bad("reasoning must be non-empty and trimmed");
    const auto& refs = path.relation.refs;
    if ((path.relation.kind == RelationKind::Unrelated) != refs.empty()) bad("refs must be empty iff Unrelated");
    for (std::size_t k = 0; k < refs.size(); ++k) {
      if (refs[k] < 1 || static_cast<std::size_t>(refs[k]) > r.premises.size()) bad("dangling premise reference");
      if (k > 0 && refs[k] <= refs[k - 1]) bad("refs must be strictly increasing");
    }
  }
  if (r.predicted >= r.paths.size()) bad("predicted label out of range");
}

std::optional<std::size_t> find_final_answer(std::string_view text, std::size_t n_options) {
  auto matches = final_answer_matches(text, n_options);
  if (matches.empty()) return std::nullopt;
  for (const auto& m : matches) {
    if (m.label != matches.front().label) {
      fail(ErrorCode::AmbiguousFinalAnswer,
           fmt::format("final answer asserted as both {} and {}", option_tag(matches.front().label), option_tag(m.label)));
    }
  }
  return matches.front().label;
}

Rationale parse_rationale(std::string_view text, std::size_t n_options) {
  if (n_options < 2 || n_options > kMaxOptions) {
    fail(ErrorCode::InvalidArgument, fmt::format("n_options must be in 2..26, got {}", n_options));
  }
  const auto lines = util::split_lines(text);

  std::size_t summarize = lines.size();
  std::size_t analyze = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (summarize == lines.size()) {
      if (is_summarize_header(lines[i])) summarize = i;
    } else if (is_analyze_header(lines[i])) {
      analyze = i;
      break;
    }
  }
  if (summarize == lines.size()) fail(ErrorCode::MissingSection, "no \"Summarize Premises\" section");
  if (analyze == lines.size()) fail(ErrorCode::MissingSection, "no \"Analyze Options\" section");

  Rationale r;
  for (std::size_t i = summarize + 1; i < analyze; ++i) {
    std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    if (auto m = match_premise_line(line)) {
      if (m->first != static_cast<int>(r.premises.size()) + 1) {
        fail(ErrorCode::MalformedPremiseList,
             fmt::format("premise numbered {} where {} was expected", m->first, r.premises.size() + 1));
      }
      if (m->second.empty()) fail(ErrorCode::MalformedPremiseList, fmt::format("premise {} is empty", m->first));
      r.premises.push_back({m->first, std::string(m->second)});
    } else if (!r.premises.empty()) {
      r.premises.back().text += ' ';
      r.premises.back().text += line;
    }
  }
  if (r.premises.empty()) fail(ErrorCode::MalformedPremiseList, "no numbered premises");
  if (r.premises.size() > kMaxPremises) fail(ErrorCode::MalformedPremiseList, "more than 99 premises");

  bool in_path = false;
  std::vector<std::string> conclusion_lines;
  bool in_conclusion = false;
  for (std::size_t i = analyze + 1; i < lines.size(); ++i) {
    const std::string& raw = lines[i];
    if (in_conclusion) {
      conclusion_lines.push_back(raw);
      continue;
    }
    std::string_view line = trim(raw);
    if (auto marker = match_path_marker(line)) {
      auto idx = label_index(marker->first);
      if (in_path) {
        fail(ErrorCode::MalformedRelation,
             fmt::format("option {} has no \"Identify Premises\" line", option_tag(r.paths.back().option)));
      }
      if (r.paths.size() == n_options && idx != n_options) {
        in_conclusion = true;
        conclusion_lines.push_back(raw);
        continue;
      }
      if (!idx || *idx != r.paths.size()) {
        fail(ErrorCode::PathCountMismatch,
             fmt::format("found option ({}) where {} was expected among {} options", marker->first,
                         r.paths.size() < kMaxOptions ? option_tag(r.paths.size()) : "none", n_options));
      }
      r.paths.push_back({*idx, std::string(marker->second), {}});
      in_path = true;
    } else if (auto phrase = match_identify_line(line)) {
      if (!in_path) fail(ErrorCode::MalformedRelation, "\"Identify Premises\" line outside an option block");
      auto& path = r.paths.back();
      if (path.reasoning.empty()) {
        fail(ErrorCode::PathCountMismatch, fmt::format("option {} has an empty thought-path", option_tag(path.option)));
      }
      path.relation = parse_relation(*phrase, r.premises.size(), option_label(path.option));
      in_path = false;
    } else if (in_path) {
      if (!line.empty()) {
        auto& reasoning = r.paths.back().reasoning;
        if (!reasoning.empty()) reasoning += '\n';
        reasoning += line;
      }
    } else if (r.paths.size() == n_options && !line.empty()) {
      in_conclusion = true;
      conclusion_lines.push_back(raw);
    }
  }
  if (in_path) {
    fail(ErrorCode::MalformedRelation,
         fmt::format("option {} has no \"Identify Premises\" line", option_tag(r.paths.back().option)));
  }
  if (r.paths.size() != n_options) {
    fail(ErrorCode::PathCountMismatch, fmt::format("expected {} thought-paths, found {}", n_options, r.paths.size()));
  }

  std::string tail;
  for (std::size_t i = analyze + 1; i < lines.size(); ++i) {
    tail += lines[i];
    tail += '\n';
  }
  auto predicted = find_final_answer(tail, n_options);
  if (!predicted) fail(ErrorCode::NoFinalAnswer, "no \"the optimal correct answer is (x)\" sentence");
  r.predicted = *predicted;

  std::string conclusion;
  for (std::size_t i = 0; i < conclusion_lines.size(); ++i) {
    if (i) conclusion += '\n';
    conclusion += conclusion_lines[i];
  }
  r.conclusion = strip_final_sentence(conclusion, n_options);
  return r;
}

std::string render_relation(const PremiseRelation& relation) {
  if (relation.kind == RelationKind::Unrelated) return "Unrelated to the premises.";
  std::string refs;
  for (std::size_t i = 0; i < relation.refs.size(); ++i) {
    if (i > 0) refs += (i + 1 == relation.refs.size()) ? " and " : ", ";
    refs += std::to_string(relation.refs[i]);
  }
  return fmt::format("{} by {} {}.", relation.kind == RelationKind::Supported ? "Supported" : "Contradicted",
                     relation.refs.size() == 1 ? "premise" : "premises", refs);
}

std::string render_rationale(const Rationale& r) {
  std::string out = "Summarize Premises:\n";
  for (const auto& p : r.premises) out += fmt::format("{}. {}\n", p.index, p.text);
  out += "Analyze Options:\n";
  for (const auto& path : r.paths) {
    out += fmt::format("{} {}\n", option_tag(path.option), path.reasoning);
    out += fmt::format("Identify Premises: {}\n", render_relation(path.relation));
  }
  out += '\n';
  if (!r.conclusion.empty()) {
    out += r.conclusion;
    char last = r.conclusion.back();
    out += (last == '.' || last == '!' || last == '?') ? ' ' : '\n';
  }
  out += fmt::format("{}{}.\n", kFinalAnswerLead, option_tag(r.predicted));
  return out;
}

PremisePartition partition_premises(const Rationale& r, std::size_t answer) {
  if (answer >= r.paths.size()) {
    fail(ErrorCode::InvalidArgument, fmt::format("answer index {} has no thought-path", answer));
  }
  PremisePartition part;
  part.linked = r.paths[answer].relation.refs;
  for (const auto& p : r.premises) {
    if (!std::binary_search(part.linked.begin(), part.linked.end(), p.index)) part.unlinked.push_back(p.index);
  }
  return part;
}

}  // namespace poda::rationale
