// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Clarification sampling, contribution evaluation, and preference-pair
// construction. A candidate clarification's contribution is the parser's
// total log-probability of the gold relation string given the clarified
// context; pairs contrast the best candidate above the unclarified
// baseline with the worst below it.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ddp/corpus.hpp"
#include "ddp/error.hpp"
#include "ddp/protocol.hpp"
#include "ddp/scorer.hpp"

namespace ddp {

struct Candidate {
  std::string text;  // clarified utterance
  double e = 0.0;    // contribution score (total log-prob)
};

struct PreferencePair {
  InstanceId context;
  std::string plus;   // u+
  std::string minus;  // u-
  double e_plus = 0.0;
  double e_minus = 0.0;
  double e_base = 0.0;
  double g = 0.0;  // contribution gap e_plus - e_minus

  bool operator==(const PreferencePair&) const = default;
};

struct Discarded {
  std::string reason;
};

using PairOutcome = std::variant<PreferencePair, Discarded>;

struct PreferenceParams {
  int n_clarifications = 5;
  int context_window = 20;
  SamplingParams sampling{};  // n overridden by n_clarifications
};

struct SampledClarifications {
  std::vector<std::string> texts;
  int dropped = 0;  // unparseable completions
};

inline SampledClarifications sample_clarifications(Scorer& dcm, const Dialogue& context, int n,
                                                   const SamplingParams& params) {
  if (n < 1) throw ConfigError("clarification sample count must be >= 1");
  const std::string prompt = render_dcm_prompt(context);
  SampledClarifications out;
  for (const std::string& completion : dcm.sample(prompt, params.with_n(n))) {
    try {
      out.texts.push_back(parse_dcm_output(completion).clarified);
    } catch (const ParseError&) {
      ++out.dropped;
    }
  }
  return out;
}

// Parser log-probability of the gold relation string after substituting
// the clarified utterance. Identical template to the baseline score, so
// substituting the original text reproduces the baseline exactly.
inline double contribution_score(Scorer& parser, const Dialogue& context, const std::string& u_c,
                                 const GoldRelation& y) {
  const Dialogue clarified = substitute_clarification(context, u_c);
  return parser.score(render_dp_prompt(clarified, clarified.last().index),
                      format_parse_output(ParseOutput::from_gold(y)));
}

// Strictly-above / strictly-below partition around the baseline; a pair
// needs both sides populated. Ties inside a side keep the first occurrence.
inline PairOutcome construct_pair(const InstanceId& context, const std::vector<Candidate>& candidates,
                                  double e_base) {
  if (candidates.empty()) throw ConfigError("construct_pair requires candidates");
  const Candidate* best_above = nullptr;
  const Candidate* worst_below = nullptr;
  for (const Candidate& c : candidates) {
    if (c.e > e_base && (!best_above || c.e > best_above->e)) best_above = &c;
    if (c.e < e_base && (!worst_below || c.e < worst_below->e)) worst_below = &c;
  }
  if (!best_above || !worst_below) {
    return Discarded{!best_above ? "no candidate above baseline" : "no candidate below baseline"};
  }
  PreferencePair pair;
  pair.context = context;
  pair.plus = best_above->text;
  pair.minus = worst_below->text;
  pair.e_plus = best_above->e;
  pair.e_minus = worst_below->e;
  pair.e_base = e_base;
  pair.g = pair.e_plus - pair.e_minus;
  return pair;
}

struct PreferenceBuildResult {
  std::vector<PreferencePair> pairs;
  int discarded = 0;        // instances whose candidates fell on one side
  int dropped_samples = 0;  // unparseable clarification completions
  int skipped = 0;          // instances lost to scorer errors or missing gold
  std::vector<std::string> skip_log;
};

inline PreferenceBuildResult build_preference_dataset(const Corpus& rest_set, Scorer& dcm,
                                                      Scorer& parser,
                                                      const PreferenceParams& params = {}) {
  PreferenceBuildResult result;
  for (const AnnotatedInstance& instance : rest_set.instances) {
    if (!instance.gold) {
      ++result.skipped;
      result.skip_log.push_back(instance.id().str() + ": no gold relation");
      continue;
    }
    try {
      const Dialogue context = truncate_context(instance.context, params.context_window);
      SampledClarifications sampled =
          sample_clarifications(dcm, context, params.n_clarifications, params.sampling);
      result.dropped_samples += sampled.dropped;
      if (sampled.texts.empty()) {
        ++result.discarded;
        continue;
      }
      const double e_base =
          contribution_score(parser, context, context.last().text, *instance.gold);
      std::vector<Candidate> candidates;
      candidates.reserve(sampled.texts.size());
      for (const std::string& u_c : sampled.texts) {
        candidates.push_back({u_c, contribution_score(parser, context, u_c, *instance.gold)});
      }
      PairOutcome outcome = construct_pair(instance.id(), candidates, e_base);
      if (auto* pair = std::get_if<PreferencePair>(&outcome)) {
        result.pairs.push_back(*pair);
      } else {
        ++result.discarded;
      }
    } catch (const Error& e) {
      ++result.skipped;
      result.skip_log.push_back(instance.id().str() + ": " + e.what());
    }
  }
  return result;
}

inline nlohmann::json pair_to_json(const PreferencePair& p) {
  return {{"dialogue_id", p.context.dialogue_id}, {"k", p.context.k},
          {"u_plus", p.plus},                     {"u_minus", p.minus},
          {"e_plus", p.e_plus},                   {"e_minus", p.e_minus},
          {"e_base", p.e_base},                   {"g", p.g}};
}

inline PreferencePair pair_from_json(const nlohmann::json& j) {
  PreferencePair p;
  p.context = {j.at("dialogue_id").get<std::string>(), j.at("k").get<int>()};
  p.plus = j.at("u_plus").get<std::string>();
  p.minus = j.at("u_minus").get<std::string>();
  p.e_plus = j.at("e_plus").get<double>();
  p.e_minus = j.at("e_minus").get<double>();
  p.e_base = j.at("e_base").get<double>();
  p.g = j.at("g").get<double>();
  return p;
}

inline void write_pairs(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path,
                        const std::optional<nlohmann::json>& meta = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pairs file: " + path.string());
  if (meta) out << nlohmann::json{{"_meta", *meta}}.dump() << "\n";
  for (const auto& p : pairs) out << pair_to_json(p).dump() << "\n";
}

inline std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pairs file: " + path.string());
  std::vector<PreferencePair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (is_meta_line(j)) continue;
      pairs.push_back(pair_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": malformed preference pair: " + e.what());
    }
  }
  return pairs;
}

}  // namespace ddp
