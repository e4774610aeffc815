// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "ddp/corpus.hpp"
#include "ddp/protocol.hpp"

namespace ddp {

// Micro-averaged arc scores. Link counts a predicted arc whose
// (child, parent) matches gold; link+relation additionally requires the
// relation type to match.
struct EvalReport {
  long gold_arcs = 0;
  long predicted_arcs = 0;
  long link_correct = 0;
  long lr_correct = 0;

  double link_precision = 0, link_recall = 0, link_f1 = 0;
  double lr_precision = 0, lr_recall = 0, lr_f1 = 0;

  // Diagnostic per-relation tallies; no acceptance contract attached.
  struct RelCounts {
    long gold = 0;
    long predicted = 0;
    long lr_correct = 0;
  };
  std::map<RelationType, RelCounts> per_relation;
};

namespace detail {

inline double safe_div(long num, long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace detail

// NoLink and Invalid predictions contribute no arc; a NoLink prediction on
// an instance without a gold arc therefore adds nothing to any denominator.
inline EvalReport evaluate(const std::map<InstanceId, ParseOutput>& predictions,
                           const std::map<InstanceId, std::optional<GoldRelation>>& golds) {
  for (const auto& [id, _] : predictions) {
    if (!golds.count(id)) {
      throw ConfigError("prediction for unknown instance " + id.str());
    }
  }

  EvalReport report;
  for (const auto& [id, gold] : golds) {
    if (gold) {
      ++report.gold_arcs;
      ++report.per_relation[gold->rel].gold;
    }
    auto it = predictions.find(id);
    if (it == predictions.end()) continue;
    const ParseOutput& pred = it->second;
    if (!pred.is_link()) continue;  // Invalid scores as NoLink
    ++report.predicted_arcs;
    ++report.per_relation[pred.rel].predicted;
    if (gold && pred.child == gold->child && pred.parent == gold->parent) {
      ++report.link_correct;
      if (pred.rel == gold->rel) {
        ++report.lr_correct;
        ++report.per_relation[pred.rel].lr_correct;
      }
    }
  }

  report.link_precision = detail::safe_div(report.link_correct, report.predicted_arcs);
  report.link_recall = detail::safe_div(report.link_correct, report.gold_arcs);
  report.link_f1 = detail::f1(report.link_precision, report.link_recall);
  report.lr_precision = detail::safe_div(report.lr_correct, report.predicted_arcs);
  report.lr_recall = detail::safe_div(report.lr_correct, report.gold_arcs);
  report.lr_f1 = detail::f1(report.lr_precision, report.lr_recall);
  return report;
}

inline std::string format_fraction_4dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Run-report serialization; fractions fixed at 4 decimal places.
inline nlohmann::json report_to_json(const EvalReport& r, bool full = false) {
  nlohmann::json j{
      {"counts",
       {{"gold_arcs", r.gold_arcs},
        {"predicted_arcs", r.predicted_arcs},
        {"link_correct", r.link_correct},
        {"lr_correct", r.lr_correct}}},
      {"link_precision", format_fraction_4dp(r.link_precision)},
      {"link_recall", format_fraction_4dp(r.link_recall)},
      {"link_f1", format_fraction_4dp(r.link_f1)},
      {"lr_precision", format_fraction_4dp(r.lr_precision)},
      {"lr_recall", format_fraction_4dp(r.lr_recall)},
      {"lr_f1", format_fraction_4dp(r.lr_f1)},
  };
  if (full) {
    nlohmann::json rel = nlohmann::json::object();
    for (const auto& [r_type, c] : r.per_relation) {
      rel[std::string(relation_name(r_type))] = {
          {"gold", c.gold}, {"predicted", c.predicted}, {"lr_correct", c.lr_correct}};
    }
    j["per_relation"] = rel;
  }
  return j;
}

}  // namespace ddp
