// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain model for multi-party dialogues with dependency-arc annotations,
// plus ingestion of the normalized JSON-lines interchange format:
//
//   {"id": "...", "turns": [{"speaker": "...", "text": "..."}, ...],
//    "relations": [{"child": 6, "parent": 5, "type": "comment"}, ...]}
//
// Every turn of every dialogue becomes one AnnotatedInstance whose context
// is the dialogue prefix up to that turn; turns without an annotated parent
// keep an absent gold so inference can still answer "none" for them.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/relation.hpp"
#include "ddp/util.hpp"

namespace ddp {

struct Utterance {
  int index = 0;  // 1-based turn position
  std::string speaker;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> turns;

  bool operator==(const Dialogue&) const = default;

  int length() const { return static_cast<int>(turns.size()); }
  const Utterance& last() const { return turns.back(); }
};

struct GoldRelation {
  int child = 0;
  int parent = 0;
  RelationType rel = RelationType::comment;

  bool operator==(const GoldRelation&) const = default;
};

// Composite key naming one parse decision: dialogue + current turn index.
struct InstanceId {
  std::string dialogue_id;
  int k = 0;

  auto operator<=>(const InstanceId&) const = default;

  std::string str() const { return dialogue_id + ":" + std::to_string(k); }
};

struct AnnotatedInstance {
  std::string dialogue_id;
  Dialogue context;  // prefix of length k
  std::optional<GoldRelation> gold;

  bool operator==(const AnnotatedInstance&) const = default;

  int k() const { return context.length(); }
  InstanceId id() const { return {dialogue_id, k()}; }
};

struct Corpus {
  std::string name;
  std::vector<Dialogue> dialogues;
  std::vector<AnnotatedInstance> instances;

  size_t size() const { return instances.size(); }

  bool operator==(const Corpus& other) const {
    return dialogues == other.dialogues && instances == other.instances;
  }

  const Dialogue* find_dialogue(std::string_view id) const {
    for (const auto& d : dialogues) {
      if (d.id == id) return &d;
    }
    return nullptr;
  }

  const AnnotatedInstance* find_instance(const InstanceId& id) const {
    for (const auto& inst : instances) {
      if (inst.dialogue_id == id.dialogue_id && inst.k() == id.k) return &inst;
    }
    return nullptr;
  }
};

namespace detail {

inline void validate_dialogue(const Dialogue& d) {
  if (d.id.empty()) throw ParseError("dialogue id must be non-empty");
  if (d.turns.empty()) throw ParseError("dialogue \"" + d.id + "\" has no turns");
  for (int i = 0; i < d.length(); ++i) {
    const Utterance& u = d.turns[static_cast<size_t>(i)];
    if (u.index != i + 1) {
      throw ParseError("dialogue \"" + d.id + "\": turn indices must be consecutive from 1");
    }
    if (u.speaker.empty()) {
      throw ParseError("dialogue \"" + d.id + "\" turn " + std::to_string(i + 1) +
                       ": speaker must be non-empty");
    }
  }
}

inline void validate_gold(const GoldRelation& g, const Dialogue& d) {
  if (g.parent < 1 || g.parent >= g.child) {
    throw ParseError("dialogue \"" + d.id + "\" relation (" + std::to_string(g.child) + "," +
                     std::to_string(g.parent) + "): parent must precede child");
  }
  if (g.child > d.length()) {
    throw ParseError("dialogue \"" + d.id + "\" relation child " + std::to_string(g.child) +
                     " exceeds dialogue length " + std::to_string(d.length()));
  }
}

// Expands one dialogue into per-turn instances.
inline void append_instances(const Dialogue& d, const std::map<int, GoldRelation>& by_child,
                             std::vector<AnnotatedInstance>& out) {
  Dialogue prefix;
  prefix.id = d.id;
  for (int k = 1; k <= d.length(); ++k) {
    prefix.turns.push_back(d.turns[static_cast<size_t>(k - 1)]);
    AnnotatedInstance inst;
    inst.dialogue_id = d.id;
    inst.context = prefix;
    if (auto it = by_child.find(k); it != by_child.end()) inst.gold = it->second;
    out.push_back(std::move(inst));
  }
}

inline std::pair<Dialogue, std::map<int, GoldRelation>> dialogue_from_json(const nlohmann::json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  int idx = 0;
  for (const auto& t : j.at("turns")) {
    Utterance u;
    u.index = ++idx;
    u.speaker = t.at("speaker").get<std::string>();
    u.text = t.value("text", std::string());
    d.turns.push_back(std::move(u));
  }
  validate_dialogue(d);

  std::map<int, GoldRelation> by_child;
  if (j.contains("relations")) {
    for (const auto& r : j.at("relations")) {
      GoldRelation g;
      g.child = r.at("child").get<int>();
      g.parent = r.at("parent").get<int>();
      g.rel = parse_relation(r.at("type").get<std::string>());
      validate_gold(g, d);
      if (!by_child.emplace(g.child, g).second) {
        throw ParseError("dialogue \"" + d.id + "\": multiple relations for child " +
                         std::to_string(g.child) + " (one arc per child)");
      }
    }
  }
  return {std::move(d), std::move(by_child)};
}

}  // namespace detail

// Recognized as an artifact metadata header, not a dialogue record.
inline bool is_meta_line(const nlohmann::json& j) {
  return j.is_object() && j.contains("_meta");
}

inline Corpus load_corpus(std::istream& in, std::string name) {
  Corpus corpus;
  corpus.name = std::move(name);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    if (is_meta_line(j)) continue;
    try {
      auto [dialogue, by_child] = detail::dialogue_from_json(j);
      if (!seen_ids.insert(dialogue.id).second) {
        throw ParseError("duplicate dialogue id \"" + dialogue.id + "\"");
      }
      detail::append_instances(dialogue, by_child, corpus.instances);
      corpus.dialogues.push_back(std::move(dialogue));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  return load_corpus(in, path.stem().string());
}

inline nlohmann::json dialogue_to_json(const Dialogue& d,
                                       const std::vector<GoldRelation>& relations) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& u : d.turns) {
    turns.push_back({{"speaker", u.speaker}, {"text", u.text}});
  }
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& g : relations) {
    rels.push_back({{"child", g.child},
                    {"parent", g.parent},
                    {"type", std::string(relation_name(g.rel))}});
  }
  return {{"id", d.id}, {"turns", turns}, {"relations", rels}};
}

inline void write_corpus(const Corpus& corpus, std::ostream& out,
                         const std::optional<nlohmann::json>& meta = std::nullopt) {
  std::map<std::string, std::vector<GoldRelation>> by_dialogue;
  for (const auto& inst : corpus.instances) {
    if (inst.gold) by_dialogue[inst.dialogue_id].push_back(*inst.gold);
  }
  if (meta) out << nlohmann::json{{"_meta", *meta}}.dump() << "\n";
  for (const auto& d : corpus.dialogues) {
    auto it = by_dialogue.find(d.id);
    static const std::vector<GoldRelation> kNone;
    out << dialogue_to_json(d, it == by_dialogue.end() ? kNone : it->second).dump() << "\n";
  }
}

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& path,
                         const std::optional<nlohmann::json>& meta = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path.string());
  write_corpus(corpus, out, meta);
}

// Disjoint partition at dialogue granularity. The seed set receives
// round(alpha * |dialogues|) dialogues, chosen by a seeded shuffle;
// relative dialogue order is preserved within each part.
inline std::pair<Corpus, Corpus> split_seed(const Corpus& corpus, double alpha, uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  if (corpus.dialogues.empty()) throw ConfigError("cannot split an empty corpus");

  const size_t total = corpus.dialogues.size();
  const size_t n_seed = static_cast<size_t>(std::llround(alpha * static_cast<double>(total)));

  std::vector<size_t> order(total);
  for (size_t i = 0; i < total; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  seeded_shuffle(order, rng);

  std::set<std::string> seed_ids;
  for (size_t i = 0; i < n_seed; ++i) {
    seed_ids.insert(corpus.dialogues[order[i]].id);
  }

  Corpus seed_set, rest;
  seed_set.name = corpus.name + "/seed";
  rest.name = corpus.name + "/rest";
  for (const auto& d : corpus.dialogues) {
    (seed_ids.count(d.id) ? seed_set : rest).dialogues.push_back(d);
  }
  for (const auto& inst : corpus.instances) {
    (seed_ids.count(inst.dialogue_id) ? seed_set : rest).instances.push_back(inst);
  }
  return {std::move(seed_set), std::move(rest)};
}

// Keeps the last min(window, k) turns; original turn indices survive so
// rendered labels still match the annotation.
inline Dialogue truncate_context(const Dialogue& context, int window = 20) {
  if (window < 1) throw ConfigError("window must be >= 1");
  if (context.length() <= window) return context;
  Dialogue out;
  out.id = context.id;
  out.turns.assign(context.turns.end() - window, context.turns.end());
  return out;
}

}  // namespace ddp
