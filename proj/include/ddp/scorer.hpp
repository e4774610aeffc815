// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Generative-scoring contract shared by the remote client, the scripted
// mock, and the trainable policy. score() returns the total log-probability
// of the completion (summed over completion tokens, no length
// normalization) — the contribution-score definition every consumer
// inherits.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/util.hpp"

namespace ddp {

struct SamplingParams {
  double temperature = 0.6;
  double top_p = 0.9;
  int max_output_length = 512;
  int n = 1;

  void validate() const {
    if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
    if (!(top_p > 0 && top_p <= 1)) throw ConfigError("top_p must lie in (0,1]");
    if (max_output_length < 1) throw ConfigError("max_output_length must be >= 1");
    if (n < 1) throw ConfigError("sample count n must be >= 1");
  }

  SamplingParams with_n(int count) const {
    SamplingParams p = *this;
    p.n = count;
    return p;
  }
};

class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual bool can_sample() const { return true; }
  virtual bool can_score() const { return true; }

  // Returns exactly params.n completions.
  virtual std::vector<std::string> sample(const std::string& prompt,
                                          const SamplingParams& params) = 0;

  // Total log-probability of the completion given the prompt; finite and
  // <= 0 for proper distributions.
  virtual double score(const std::string& prompt, const std::string& completion) = 0;
};

// Stable script key for a prompt (FNV-1a 64 over the prompt bytes).
inline std::string prompt_key(std::string_view prompt) { return to_hex(fnv1a64(prompt)); }

struct ScriptEntry {
  std::vector<std::string> samples;          // consumed in order by sample()
  std::map<std::string, double> scores;      // completion -> total log-prob
};

using ScriptMap = std::map<std::string, ScriptEntry>;  // prompt_key -> entry

// Fully deterministic scorer driven by a prepared script. Unscripted
// prompts or completions are errors; fixtures must cover every call.
class MockScorer : public Scorer {
 public:
  MockScorer() = default;
  explicit MockScorer(ScriptMap script) : script_(std::move(script)) {}

  static MockScorer from_json(const nlohmann::json& j) {
    ScriptMap script;
    for (const auto& [key, entry] : j.items()) {
      ScriptEntry e;
      if (entry.contains("samples")) e.samples = entry["samples"].get<std::vector<std::string>>();
      if (entry.contains("scores")) {
        for (const auto& [completion, lp] : entry["scores"].items()) {
          e.scores[completion] = lp.get<double>();
        }
      }
      script[key] = std::move(e);
    }
    return MockScorer(std::move(script));
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, e] : script_) {
      j[key] = {{"samples", e.samples}, {"scores", e.scores}};
    }
    return j;
  }

  // Appends scripted behaviour for a prompt given in the clear.
  void add_samples(const std::string& prompt, std::vector<std::string> samples) {
    auto& e = script_[prompt_key(prompt)];
    e.samples.insert(e.samples.end(), samples.begin(), samples.end());
  }
  void add_score(const std::string& prompt, const std::string& completion, double logprob) {
    script_[prompt_key(prompt)].scores[completion] = logprob;
  }

  std::vector<std::string> sample(const std::string& prompt, const SamplingParams& params) override {
    params.validate();
    ++sample_calls_;
    const std::string key = prompt_key(prompt);
    auto it = script_.find(key);
    if (it == script_.end()) throw ScriptError("unscripted prompt (key " + key + ")");
    size_t& cursor = cursors_[key];
    if (cursor + static_cast<size_t>(params.n) > it->second.samples.size()) {
      throw ScriptError("script exhausted for prompt key " + key + ": requested " +
                        std::to_string(params.n) + ", remaining " +
                        std::to_string(it->second.samples.size() - cursor));
    }
    std::vector<std::string> out(it->second.samples.begin() + static_cast<long>(cursor),
                                 it->second.samples.begin() + static_cast<long>(cursor) +
                                     params.n);
    cursor += static_cast<size_t>(params.n);
    return out;
  }

  double score(const std::string& prompt, const std::string& completion) override {
    ++score_calls_;
    const std::string key = prompt_key(prompt);
    auto it = script_.find(key);
    if (it == script_.end()) throw ScriptError("unscripted prompt (key " + key + ")");
    auto sit = it->second.scores.find(completion);
    if (sit == it->second.scores.end()) {
      throw ScriptError("unscripted completion \"" + completion + "\" for prompt key " + key);
    }
    return sit->second;
  }

  int sample_calls() const { return sample_calls_; }
  int score_calls() const { return score_calls_; }
  void reset_cursors() { cursors_.clear(); }

 private:
  ScriptMap script_;
  std::map<std::string, size_t> cursors_;
  int sample_calls_ = 0;
  int score_calls_ = 0;
};

inline MockScorer mock_from_script(ScriptMap script) { return MockScorer(std::move(script)); }

}  // namespace ddp
