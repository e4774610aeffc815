// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "ddp/error.hpp"
#include "ddp/util.hpp"

namespace ddp {

// The 16 SDRT relation types used by STAC and Molweni, in canonical order.
enum class RelationType {
  comment,
  clarification_question,
  elaboration,
  acknowledgement,
  continuation,
  explanation,
  conditional,
  question_answer_pair,
  alternation,
  question_elaboration,
  result,
  background,
  narration,
  correction,
  parallel,
  contrast,
};

inline constexpr int kRelationCount = 16;

inline constexpr std::array<std::string_view, kRelationCount> kRelationNames = {
    "comment",       "clarification_question", "elaboration", "acknowledgement",
    "continuation",  "explanation",            "conditional", "question_answer_pair",
    "alternation",   "question_elaboration",   "result",      "background",
    "narration",     "correction",             "parallel",    "contrast",
};

inline constexpr std::array<RelationType, kRelationCount> kAllRelations = {
    RelationType::comment,       RelationType::clarification_question,
    RelationType::elaboration,   RelationType::acknowledgement,
    RelationType::continuation,  RelationType::explanation,
    RelationType::conditional,   RelationType::question_answer_pair,
    RelationType::alternation,   RelationType::question_elaboration,
    RelationType::result,        RelationType::background,
    RelationType::narration,     RelationType::correction,
    RelationType::parallel,      RelationType::contrast,
};

inline std::string_view relation_name(RelationType r) {
  return kRelationNames[static_cast<size_t>(r)];
}

// Prose phrase used when a relation is named inside an instruction,
// e.g. "question-answer pair". Differs from the wire identifier only
// where the identifier contains underscores.
inline std::string_view relation_phrase(RelationType r) {
  switch (r) {
    case RelationType::clarification_question: return "clarification-question";
    case RelationType::question_answer_pair: return "question-answer pair";
    case RelationType::question_elaboration: return "question-elaboration";
    default: return relation_name(r);
  }
}

// Tolerant parse: case-insensitive, hyphen/underscore/space variants,
// plus the "acknowledgment" spelling. Returns nullopt when unknown.
inline std::optional<RelationType> try_parse_relation(std::string_view text) {
  std::string norm = to_lower(trim(text));
  for (char& c : norm) {
    if (c == '-' || c == ' ') c = '_';
  }
  if (norm == "acknowledgment") norm = "acknowledgement";
  for (int i = 0; i < kRelationCount; ++i) {
    if (norm == kRelationNames[static_cast<size_t>(i)]) {
      return static_cast<RelationType>(i);
    }
  }
  return std::nullopt;
}

inline RelationType parse_relation(std::string_view text) {
  auto r = try_parse_relation(text);
  if (!r) throw ParseError("unknown relation type: \"" + std::string(text) + "\"");
  return *r;
}

}  // namespace ddp
