// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Uncertainty-gated parsing. A first round of o sampled parses is accepted
// only when the modal output holds a strict majority (count > o/2);
// otherwise the context is clarified once and a second vote decides by
// plurality. Invalid parses abstain but stay in the denominator, so noisy
// output makes the gate harder to pass.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddp/corpus.hpp"
#include "ddp/error.hpp"
#include "ddp/protocol.hpp"
#include "ddp/scorer.hpp"

namespace ddp {

struct VoteResult {
  ParseOutput winner;
  int count = 0;
  int total = 0;
  std::map<ParseOutput, int> histogram;  // valid outputs only
  int abstentions = 0;                   // Invalid entries
};

namespace detail {

// Tie-break among equally frequent outputs: higher parent index first,
// then earlier canonical relation order. NoLink ranks below any link.
inline bool tie_break_before(const ParseOutput& a, const ParseOutput& b) {
  const int pa = a.is_link() ? a.parent : 0;
  const int pb = b.is_link() ? b.parent : 0;
  if (pa != pb) return pa > pb;
  const int ra = a.is_link() ? static_cast<int>(a.rel) : kRelationCount;
  const int rb = b.is_link() ? static_cast<int>(b.rel) : kRelationCount;
  return ra < rb;
}

}  // namespace detail

inline VoteResult vote(const std::vector<ParseOutput>& predictions) {
  if (predictions.empty()) throw ConfigError("vote requires at least one prediction");
  VoteResult result;
  result.total = static_cast<int>(predictions.size());
  for (const ParseOutput& p : predictions) {
    if (p.is_invalid()) {
      ++result.abstentions;
    } else {
      ++result.histogram[p];
    }
  }
  result.winner = ParseOutput::none();
  result.count = 0;
  bool first = true;
  for (const auto& [output, count] : result.histogram) {
    if (first || count > result.count ||
        (count == result.count && detail::tie_break_before(output, result.winner))) {
      result.winner = output;
      result.count = count;
      first = false;
    }
  }
  return result;
}

enum class GateDecision { confident, clarified };

struct InferenceTrace {
  InstanceId id;
  VoteResult round1;
  std::optional<std::string> clarified;
  std::optional<VoteResult> round2;
  ParseOutput final;
  GateDecision gate = GateDecision::confident;
  bool dcm_fallback = false;  // clarification wanted but none parsed
};

struct InferParams {
  int o = 10;                 // prediction trials per vote
  int n_clarifications = 5;   // DCM attempts when the gate fires
  int context_window = 20;
  SamplingParams sampling{};
};

namespace detail {

inline VoteResult sample_and_vote(Scorer& parser, const Dialogue& context, int k,
                                  const InferParams& params) {
  const std::string prompt = render_dp_prompt(context, k);
  std::vector<ParseOutput> outputs;
  outputs.reserve(static_cast<size_t>(params.o));
  for (const std::string& text : parser.sample(prompt, params.sampling.with_n(params.o))) {
    outputs.push_back(parse_parse_output(text, k));
  }
  return vote(outputs);
}

}  // namespace detail

inline InferenceTrace gated_parse(Scorer& parser, Scorer& dcm, const AnnotatedInstance& instance,
                                  const InferParams& params = {}) {
  if (params.o < 1) throw ConfigError("o must be >= 1");
  const Dialogue context = truncate_context(instance.context, params.context_window);
  const int k = instance.k();

  InferenceTrace trace;
  trace.id = instance.id();
  trace.round1 = detail::sample_and_vote(parser, context, k, params);

  if (2 * trace.round1.count > params.o) {
    trace.final = trace.round1.winner;
    trace.gate = GateDecision::confident;
    return trace;
  }

  std::optional<std::string> clarified;
  const std::string dcm_prompt = render_dcm_prompt(context);
  for (const std::string& completion :
       dcm.sample(dcm_prompt, params.sampling.with_n(params.n_clarifications))) {
    try {
      clarified = parse_dcm_output(completion).clarified;
      break;
    } catch (const ParseError&) {
      continue;
    }
  }
  if (!clarified) {
    trace.final = trace.round1.winner;
    trace.gate = GateDecision::confident;
    trace.dcm_fallback = true;
    return trace;
  }

  trace.clarified = clarified;
  trace.round2 = detail::sample_and_vote(parser, substitute_clarification(context, *clarified), k,
                                         params);
  // Round 2 decides by plurality; a second sub-majority still yields an answer.
  trace.final = trace.round2->winner;
  trace.gate = GateDecision::clarified;
  return trace;
}

// Correct/incorrect transitions between the round-1 winner and the final
// prediction, judged against gold at link+relation level.
struct TransitionStats {
  int correct_correct = 0;
  int correct_incorrect = 0;
  int incorrect_correct = 0;
  int incorrect_incorrect = 0;

  int total() const {
    return correct_correct + correct_incorrect + incorrect_correct + incorrect_incorrect;
  }

  nlohmann::json to_json() const {
    auto frac = [this](int n) {
      return total() == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total());
    };
    return {{"counts",
             {{"correct_correct", correct_correct},
              {"correct_incorrect", correct_incorrect},
              {"incorrect_correct", incorrect_correct},
              {"incorrect_incorrect", incorrect_incorrect}}},
            {"fractions",
             {{"correct_correct", frac(correct_correct)},
              {"correct_incorrect", frac(correct_incorrect)},
              {"incorrect_correct", frac(incorrect_correct)},
              {"incorrect_incorrect", frac(incorrect_incorrect)}}},
            {"total", total()}};
  }
};

struct BatchInferResult {
  std::map<InstanceId, ParseOutput> predictions;
  std::vector<InferenceTrace> traces;
  TransitionStats transitions;
  std::vector<std::string> errors;  // per-instance failures; batch continues
};

inline BatchInferResult batch_infer(const Corpus& corpus, Scorer& parser, Scorer& dcm,
                                    const InferParams& params = {}) {
  BatchInferResult result;
  for (const AnnotatedInstance& instance : corpus.instances) {
    try {
      InferenceTrace trace = gated_parse(parser, dcm, instance, params);
      const bool before = trace.round1.winner.matches_gold(instance.gold);
      const bool after = trace.final.matches_gold(instance.gold);
      if (before && after) ++result.transitions.correct_correct;
      if (before && !after) ++result.transitions.correct_incorrect;
      if (!before && after) ++result.transitions.incorrect_correct;
      if (!before && !after) ++result.transitions.incorrect_incorrect;
      result.predictions[trace.id] = trace.final;
      result.traces.push_back(std::move(trace));
    } catch (const Error& e) {
      result.errors.push_back(instance.id().str() + ": " + e.what());
    }
  }
  return result;
}

inline nlohmann::json vote_to_json(const VoteResult& v) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [output, count] : v.histogram) {
    hist.push_back({{"output", format_parse_output(output)}, {"count", count}});
  }
  return {{"winner", format_parse_output(v.winner)},
          {"count", v.count},
          {"total", v.total},
          {"abstentions", v.abstentions},
          {"histogram", hist}};
}

inline nlohmann::json trace_to_json(const InferenceTrace& t) {
  nlohmann::json j{{"dialogue_id", t.id.dialogue_id},
                   {"k", t.id.k},
                   {"round1", vote_to_json(t.round1)},
                   {"final", format_parse_output(t.final)},
                   {"gate", t.gate == GateDecision::confident ? "confident" : "clarified"}};
  if (t.clarified) j["clarified"] = *t.clarified;
  if (t.round2) j["round2"] = vote_to_json(*t.round2);
  if (t.dcm_fallback) j["dcm_fallback"] = true;
  return j;
}

// Predictions artifact: one {dialogue_id, k, output} record per instance.
inline void write_predictions(const std::map<InstanceId, ParseOutput>& predictions,
                              const std::filesystem::path& path,
                              const std::optional<nlohmann::json>& meta = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions file: " + path.string());
  if (meta) out << nlohmann::json{{"_meta", *meta}}.dump() << "\n";
  for (const auto& [id, output] : predictions) {
    out << nlohmann::json{{"dialogue_id", id.dialogue_id},
                          {"k", id.k},
                          {"output", format_parse_output(output)}}
               .dump()
        << "\n";
  }
}

inline std::map<InstanceId, ParseOutput> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file: " + path.string());
  std::map<InstanceId, ParseOutput> predictions;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (is_meta_line(j)) continue;
      InstanceId id{j.at("dialogue_id").get<std::string>(), j.at("k").get<int>()};
      predictions[id] = parse_parse_output(j.at("output").get<std::string>(), id.k);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": malformed prediction: " + e.what());
    }
  }
  return predictions;
}

}  // namespace ddp
