// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Wire formats for every prompt and model output in the pipeline. Prompt
// renderings are byte-stable and pinned by golden files; parsers are the
// tolerant inverses needed to consume sampled model text.

#pragma once

#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ddp/corpus.hpp"
#include "ddp/error.hpp"
#include "ddp/relation.hpp"
#include "ddp/util.hpp"

namespace ddp {

// Outcome of one parse attempt. Invalid is a first-class value (a vote
// abstention), never an exception.
struct ParseOutput {
  enum class Kind { NoLink, Link, Invalid };

  Kind kind = Kind::NoLink;
  int child = 0;
  int parent = 0;
  RelationType rel = RelationType::comment;

  static ParseOutput none() { return {}; }
  static ParseOutput invalid() { return {Kind::Invalid, 0, 0, RelationType::comment}; }
  static ParseOutput link(int child, int parent, RelationType rel) {
    if (!(parent >= 1 && parent < child)) {
      throw ConfigError("link requires 1 <= parent < child, got (" + std::to_string(child) + "," +
                        std::to_string(parent) + ")");
    }
    return {Kind::Link, child, parent, rel};
  }
  static ParseOutput from_gold(const GoldRelation& g) { return link(g.child, g.parent, g.rel); }

  bool is_link() const { return kind == Kind::Link; }
  bool is_none() const { return kind == Kind::NoLink; }
  bool is_invalid() const { return kind == Kind::Invalid; }

  bool matches_gold(const std::optional<GoldRelation>& gold) const {
    if (gold) {
      return is_link() && child == gold->child && parent == gold->parent && rel == gold->rel;
    }
    return is_none();
  }

  auto operator<=>(const ParseOutput&) const = default;
};

struct ClarificationRecord {
  std::string ctr;        // clarification-type reasoning
  std::string dgr;        // discourse-goal reasoning
  std::string clarified;  // the clarified utterance u_c

  bool operator==(const ClarificationRecord&) const = default;
};

inline constexpr std::array<std::string_view, 5> kClarificationTypes = {
    "omission", "typo", "abbreviation", "slang", "idiom"};

struct TeacherRequest {
  Dialogue context;
  int k = 0;
  GoldRelation intended;
  ParseOutput ambiguous;
  std::vector<std::string> types{kClarificationTypes.begin(), kClarificationTypes.end()};

  void validate() const {
    if (intended.child != k) throw ConfigError("intended.child must equal k");
    if (ambiguous == ParseOutput::from_gold(intended)) {
      throw ConfigError("ambiguous relation must differ from the intended one");
    }
    if (ambiguous.is_invalid()) throw ConfigError("ambiguous relation must be a concrete output");
  }
};

namespace detail {

// "u1, alice: hi | u2, bob: hey". Texts containing the separator are
// escaped to "¦"; prompts are write-only so this is never undone.
inline std::string render_turns(const Dialogue& context) {
  std::string out;
  for (size_t i = 0; i < context.turns.size(); ++i) {
    const Utterance& u = context.turns[i];
    if (i > 0) out += " | ";
    out += "u" + std::to_string(u.index) + ", " + u.speaker + ": " +
           replace_all(u.text, " | ", "¦");
  }
  return out;
}

}  // namespace detail

inline std::string render_dp_prompt(const Dialogue& context, int k) {
  if (context.turns.empty()) throw ConfigError("context must be non-empty");
  if (context.last().index != k) {
    throw ConfigError("k must equal the last turn index (" + std::to_string(context.last().index) +
                      "), got " + std::to_string(k));
  }
  std::string uk = "u" + std::to_string(k);
  return "Below is a multi-party dialogue:\n\n" + detail::render_turns(context) +
         "\n\nPlease identify a dependency utterance for utterance " + uk +
         " and determine the rhetorical relationship between them.";
}

inline std::string format_parse_output(const ParseOutput& out) {
  switch (out.kind) {
    case ParseOutput::Kind::NoLink:
      return "none";
    case ParseOutput::Kind::Link:
      return "u" + std::to_string(out.child) + ", u" + std::to_string(out.parent) + " : " +
             std::string(relation_name(out.rel));
    case ParseOutput::Kind::Invalid:
      break;
  }
  throw ConfigError("cannot format an Invalid parse output");
}

// Tolerant of whitespace, case and relation spelling variants. The child
// must equal the expected index and the parent must precede it; anything
// else is Invalid.
inline ParseOutput parse_parse_output(std::string_view text, int k) {
  std::string body(trim(text));
  {
    std::string lowered = to_lower(body);
    if (!lowered.empty() && lowered.back() == '.') lowered.pop_back();
    if (trim(lowered) == "none") return ParseOutput::none();
  }
  static const std::regex pattern(R"(^[uU](\d+)\s*,\s*[uU](\d+)\s*:\s*(.+)$)");
  std::smatch m;
  if (!std::regex_match(body, m, pattern)) return ParseOutput::invalid();
  int child = 0, parent = 0;
  try {
    child = std::stoi(m[1].str());
    parent = std::stoi(m[2].str());
  } catch (const std::exception&) {
    return ParseOutput::invalid();
  }
  std::string rel_text = m[3].str();
  {
    auto t = trim(rel_text);
    if (!t.empty() && t.back() == '.') t.remove_suffix(1);
    rel_text = std::string(trim(t));
  }
  auto rel = try_parse_relation(rel_text);
  if (!rel) return ParseOutput::invalid();
  if (child != k || parent < 1 || parent >= child) return ParseOutput::invalid();
  return ParseOutput::link(child, parent, *rel);
}

namespace detail {

inline std::string quoted_type_list(const std::vector<std::string>& types) {
  // {"omission," "typo," "abbreviation," "slang," or "idiom."}
  std::string out = "{";
  for (size_t i = 0; i < types.size(); ++i) {
    if (i + 1 == types.size()) {
      out += "or \"" + types[i] + ".\"";
    } else {
      out += "\"" + types[i] + ",\" ";
    }
  }
  out += "}";
  return out;
}

inline std::string ambiguous_phrase(const ParseOutput& amb, int k) {
  if (amb.is_link()) {
    return "the " + std::string(relation_phrase(amb.rel)) + " between utterance u" +
           std::to_string(amb.child) + " and utterance u" + std::to_string(amb.parent);
  }
  return "treating utterance u" + std::to_string(k) + " as having no dependency utterance";
}

}  // namespace detail

// Two-step clarification-data prompt: step 1 screens the utterance for the
// five ambiguity-inducing features, step 2 contrasts the intended relation
// with the ambiguous one and requests the structured three-field output.
inline std::string render_teacher_prompt(const TeacherRequest& req) {
  req.validate();
  std::string uk = "u" + std::to_string(req.k);
  std::ostringstream out;
  out << "Below is a multi-party conversation:\n\n"
      << detail::render_turns(req.context) << "\n\n"
      << "Let's break this down step by step.\n\n"
      << "# Step 1: Evaluate whether " << uk << " contains any "
      << detail::quoted_type_list(req.types) << "\n\n"
      << "# Step 2: Follow the results of step 1 as a clarification direction and provide a "
         "clarified version of utterance "
      << uk << " to ensure that the " << relation_phrase(req.intended.rel)
      << " relation type between utterance u" << req.intended.child << " and utterance u"
      << req.intended.parent << " is clear and avoid "
      << detail::ambiguous_phrase(req.ambiguous, req.k) << ".\n\n"
      << "Output Format:\n"
      << "{\n"
      << "\"Step 1 Reasoning\": \"\",\n"
      << "\"Step 2 Reasoning\": \"\",\n"
      << "\"Clarified utterance\": \"\"\n"
      << "}\n\n"
      << "Where:\n"
      << "Step 1 Reasoning is the reasoning process for Step 1.\n"
      << "Step 2 Reasoning is the reasoning process for Step 2.\n"
      << "Clarified utterance is the clarified version of utterance " << uk << ".";
  return out.str();
}

namespace detail {

// Extracts the first JSON object from text that may carry code fences or
// surrounding prose.
inline nlohmann::json extract_json_object(std::string_view text) {
  std::string body(text);
  auto try_parse = [](std::string_view candidate) -> std::optional<nlohmann::json> {
    auto j = nlohmann::json::parse(candidate, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
    return std::nullopt;
  };
  if (auto j = try_parse(trim(body))) return *j;
  // Balanced-brace scan from every candidate object start; surrounding
  // prose and code fences may themselves contain braces.
  for (size_t begin = body.find('{'); begin != std::string::npos;
       begin = body.find('{', begin + 1)) {
    int depth = 0;
    bool in_string = false;
    for (size_t i = begin; i < body.size(); ++i) {
      char c = body[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        if (auto j = try_parse(std::string_view(body).substr(begin, i - begin + 1))) return *j;
        break;
      }
    }
  }
  throw ParseError("no JSON object found in teacher output");
}

}  // namespace detail

inline ClarificationRecord parse_teacher_output(std::string_view text) {
  nlohmann::json j = detail::extract_json_object(text);
  ClarificationRecord rec;
  auto field = [&](const char* name) -> std::string {
    if (!j.contains(name) || !j[name].is_string()) {
      throw ParseError(std::string("teacher output missing field \"") + name + "\"");
    }
    return j[name].get<std::string>();
  };
  rec.ctr = field("Step 1 Reasoning");
  rec.dgr = field("Step 2 Reasoning");
  rec.clarified = field("Clarified utterance");
  if (trim(rec.clarified).empty()) throw ParseError("teacher output has empty clarified utterance");
  return rec;
}

inline std::string render_dcm_prompt(const Dialogue& context) {
  if (context.turns.empty()) throw ConfigError("context must be non-empty");
  return "Please clarify the last utterance:\n\n" + detail::render_turns(context);
}

// Labeled-section target format. The upstream description gives no
// delimiter, and clarified utterances may contain commas, so sections are
// labeled and newline-framed to keep parsing an exact inverse.
inline std::string format_dcm_target(const ClarificationRecord& rec) {
  if (trim(rec.clarified).empty()) throw ConfigError("clarified utterance must be non-empty");
  return "CTR: " + rec.ctr + "\nDGR: " + rec.dgr + "\nCLARIFIED: " + rec.clarified;
}

inline ClarificationRecord parse_dcm_output(std::string_view text) {
  static constexpr std::array<std::string_view, 3> labels = {"CTR:", "DGR:", "CLARIFIED:"};
  std::array<std::optional<std::string>, 3> sections;
  int current = -1;
  std::string body(text);
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    bool matched = false;
    for (int s = 0; s < 3; ++s) {
      if (line.rfind(labels[static_cast<size_t>(s)], 0) == 0) {
        if (sections[static_cast<size_t>(s)]) {
          throw ParseError("duplicate section label " + std::string(labels[static_cast<size_t>(s)]));
        }
        std::string rest = line.substr(labels[static_cast<size_t>(s)].size());
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        sections[static_cast<size_t>(s)] = rest;
        current = s;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (current < 0) continue;  // prose before the first label is ignored
    auto& sec = sections[static_cast<size_t>(current)];
    *sec += "\n" + line;
  }
  for (int s = 0; s < 3; ++s) {
    if (!sections[static_cast<size_t>(s)]) {
      throw ParseError("missing section label " + std::string(labels[static_cast<size_t>(s)]));
    }
  }
  ClarificationRecord rec{*sections[0], *sections[1], *sections[2]};
  if (trim(rec.clarified).empty()) throw ParseError("empty CLARIFIED section");
  return rec;
}

// Replaces the text of the last turn with the clarified utterance; the
// speaker and all earlier turns are untouched.
inline Dialogue substitute_clarification(const Dialogue& context, std::string_view u_c) {
  if (context.turns.empty()) throw ConfigError("context must be non-empty");
  if (trim(u_c).empty()) throw ConfigError("clarified utterance must be non-empty");
  Dialogue out = context;
  out.turns.back().text = std::string(u_c);
  return out;
}

}  // namespace ddp
