// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Ambiguous-relation derivation and construction of the clarification
// supervised-fine-tuning dataset. The trained-parser and teacher models are
// passed in behind the Scorer contract; actual LLM fine-tuning happens in
// external tooling on the exported file.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddp/corpus.hpp"
#include "ddp/error.hpp"
#include "ddp/protocol.hpp"
#include "ddp/scorer.hpp"
#include "ddp/util.hpp"

namespace ddp {

struct SftRecord {
  std::string prompt;  // clarification prompt over the dialogue context
  std::string target;  // formatted ClarificationRecord
  struct Provenance {
    std::string dialogue_id;
    int k = 0;
    std::string intended;   // serialized gold triple
    std::string ambiguous;  // serialized ambiguous output
    bool operator==(const Provenance&) const = default;
  } provenance;

  bool operator==(const SftRecord&) const = default;
};

// The ambiguous relation paired with an instance: the parser's own wrong
// prediction when it erred; otherwise a pseudo-ambiguous triple with the
// same parent and a relation drawn uniformly from the 15 non-gold types.
inline ParseOutput derive_ambiguous(const AnnotatedInstance& instance, const ParseOutput& prediction,
                                    std::mt19937_64& rng) {
  if (!instance.gold) throw ConfigError("derive_ambiguous requires a gold relation");
  const ParseOutput gold = ParseOutput::from_gold(*instance.gold);
  if (prediction != gold) return prediction;

  std::vector<RelationType> alternatives;
  alternatives.reserve(kRelationCount - 1);
  for (RelationType r : kAllRelations) {
    if (r != instance.gold->rel) alternatives.push_back(r);
  }
  RelationType altered = alternatives[bounded_draw(rng, alternatives.size())];
  return ParseOutput::link(instance.gold->child, instance.gold->parent, altered);
}

struct DataprepParams {
  int context_window = 20;
  SamplingParams teacher_sampling{};        // n forced to 1 per call
  double parser_greedy_temperature = 1e-3;  // near-greedy single prediction
};

struct SftBuildResult {
  std::vector<SftRecord> records;
  int skipped = 0;
  std::vector<std::string> skip_log;  // one reason per skipped instance
};

// For each gold-bearing instance: parse greedily, derive the ambiguous
// relation, ask the teacher for the three-part clarification, and keep the
// instances whose teacher output parses. records + skipped covers every
// gold instance.
inline SftBuildResult build_clarification_sft(const Corpus& seed_set, Scorer& parser,
                                              Scorer& teacher, std::mt19937_64& rng,
                                              const DataprepParams& params = {}) {
  SftBuildResult result;
  for (const AnnotatedInstance& instance : seed_set.instances) {
    if (!instance.gold) continue;
    const Dialogue context = truncate_context(instance.context, params.context_window);
    const int k = instance.k();
    try {
      SamplingParams greedy;
      greedy.temperature = params.parser_greedy_temperature;
      greedy.top_p = 1.0;
      greedy.n = 1;
      const std::string dp_prompt = render_dp_prompt(context, k);
      ParseOutput prediction = parse_parse_output(parser.sample(dp_prompt, greedy).at(0), k);
      if (prediction.is_invalid()) prediction = ParseOutput::none();

      TeacherRequest req;
      req.context = context;
      req.k = k;
      req.intended = *instance.gold;
      req.ambiguous = derive_ambiguous(instance, prediction, rng);

      const std::string teacher_prompt = render_teacher_prompt(req);
      const std::string raw = teacher.sample(teacher_prompt, params.teacher_sampling.with_n(1)).at(0);
      const ClarificationRecord rec = parse_teacher_output(raw);

      SftRecord record;
      record.prompt = render_dcm_prompt(context);
      record.target = format_dcm_target(rec);
      if (parse_dcm_output(record.target) != rec) {
        throw ParseError("clarification record does not round-trip through the target format");
      }
      record.provenance = {instance.dialogue_id, k, format_parse_output(ParseOutput::from_gold(req.intended)),
                           format_parse_output(req.ambiguous)};
      result.records.push_back(std::move(record));
    } catch (const Error& e) {
      ++result.skipped;
      result.skip_log.push_back(instance.id().str() + ": " + e.what());
    }
  }
  return result;
}

inline nlohmann::json sft_record_to_json(const SftRecord& r) {
  return {{"prompt", r.prompt},
          {"target", r.target},
          {"provenance",
           {{"dialogue_id", r.provenance.dialogue_id},
            {"k", r.provenance.k},
            {"intended", r.provenance.intended},
            {"ambiguous", r.provenance.ambiguous}}}};
}

inline SftRecord sft_record_from_json(const nlohmann::json& j) {
  SftRecord r;
  r.prompt = j.at("prompt").get<std::string>();
  r.target = j.at("target").get<std::string>();
  const auto& p = j.at("provenance");
  r.provenance.dialogue_id = p.at("dialogue_id").get<std::string>();
  r.provenance.k = p.at("k").get<int>();
  r.provenance.intended = p.at("intended").get<std::string>();
  r.provenance.ambiguous = p.at("ambiguous").get<std::string>();
  return r;
}

inline void export_sft(const std::vector<SftRecord>& records, const std::filesystem::path& path,
                       const std::optional<nlohmann::json>& meta = std::nullopt) {
  if (records.empty()) throw ConfigError("refusing to export an empty SFT dataset");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write SFT file: " + path.string());
  if (meta) out << nlohmann::json{{"_meta", *meta}}.dump() << "\n";
  for (const auto& r : records) out << sft_record_to_json(r).dump() << "\n";
}

inline std::vector<SftRecord> import_sft(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SFT file: " + path.string());
  std::vector<SftRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (is_meta_line(j)) continue;
      records.push_back(sft_record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": malformed SFT record: " + e.what());
    }
  }
  return records;
}

}  // namespace ddp
