// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale trainable language policy. Each output step is a categorical
// distribution over a closed token vocabulary; logits are sums of hashed
// bounded-order history features, so score gradients are exact and cheap.
// The policy stands in for the fine-tuned LLMs wherever the pipeline needs
// a trainable or reference model.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/scorer.hpp"
#include "ddp/util.hpp"

namespace ddp {

struct PolicySpec {
  std::vector<std::string> vocab;  // closed output token set
  int context_order = 2;           // history n-gram depth (0 = bias only)
  int feature_buckets = 64;        // hashed feature table rows
  std::string eos_token;           // optional; stops sampling when drawn

  void validate() const {
    if (vocab.empty()) throw ConfigError("policy vocab must be non-empty");
    if (context_order < 0) throw ConfigError("context_order must be >= 0");
    if (feature_buckets < 1) throw ConfigError("feature_buckets must be >= 1");
    if (!eos_token.empty() &&
        std::find(vocab.begin(), vocab.end(), eos_token) == vocab.end()) {
      throw ConfigError("eos_token must be a vocab member");
    }
  }

  nlohmann::json to_json() const {
    return {{"vocab", vocab},
            {"context_order", context_order},
            {"feature_buckets", feature_buckets},
            {"eos_token", eos_token}};
  }

  static PolicySpec from_json(const nlohmann::json& j) {
    PolicySpec s;
    s.vocab = j.at("vocab").get<std::vector<std::string>>();
    s.context_order = j.at("context_order").get<int>();
    s.feature_buckets = j.at("feature_buckets").get<int>();
    s.eos_token = j.value("eos_token", std::string());
    s.validate();
    return s;
  }
};

class TrainablePolicy {
 public:
  TrainablePolicy() = default;

  // Zero-initialized parameters give the uniform per-step distribution;
  // init_scale > 0 adds seeded jitter in [-init_scale, init_scale].
  explicit TrainablePolicy(PolicySpec spec, uint64_t seed = 0, double init_scale = 0.0)
      : spec_(std::move(spec)) {
    spec_.validate();
    params_.assign(static_cast<size_t>(spec_.feature_buckets) * spec_.vocab.size(), 0.0);
    for (size_t i = 0; i < spec_.vocab.size(); ++i) {
      if (!token_ids_.emplace(spec_.vocab[i], static_cast<int>(i)).second) {
        throw ConfigError("duplicate vocab token: " + spec_.vocab[i]);
      }
    }
    if (init_scale > 0.0) {
      std::mt19937_64 rng(seed);
      for (double& p : params_) p = init_scale * (2.0 * uniform_unit(rng) - 1.0);
    }
  }

  const PolicySpec& spec() const { return spec_; }
  size_t param_count() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }

  int vocab_size() const { return static_cast<int>(spec_.vocab.size()); }

  int token_id(const std::string& token) const {
    auto it = token_ids_.find(token);
    if (it == token_ids_.end()) {
      throw ConfigError("completion token outside policy vocab: \"" + token + "\"");
    }
    return it->second;
  }

  // Hashed feature rows active for the given history suffix: one bias row
  // plus one row per history n-gram up to context_order.
  std::vector<int> active_features(std::span<const std::string> history) const {
    std::vector<int> rows;
    rows.reserve(static_cast<size_t>(spec_.context_order) + 1);
    rows.push_back(static_cast<int>(fnv1a64("<bias>") % static_cast<uint64_t>(spec_.feature_buckets)));
    for (int order = 1; order <= spec_.context_order; ++order) {
      if (static_cast<size_t>(order) > history.size()) break;
      uint64_t h = fnv1a64("<ctx" + std::to_string(order) + ">");
      for (size_t i = history.size() - static_cast<size_t>(order); i < history.size(); ++i) {
        h = fnv1a64(history[i], h);
        h = fnv1a64("\x1f", h);
      }
      rows.push_back(static_cast<int>(h % static_cast<uint64_t>(spec_.feature_buckets)));
    }
    return rows;
  }

  // Per-step log-probabilities over the vocab; exp of these sums to 1.
  std::vector<double> step_log_probs(std::span<const std::string> history) const {
    const int vocab = vocab_size();
    std::vector<double> logits(static_cast<size_t>(vocab), 0.0);
    for (int row : active_features(history)) {
      const double* w = &params_[static_cast<size_t>(row) * static_cast<size_t>(vocab)];
      for (int v = 0; v < vocab; ++v) logits[static_cast<size_t>(v)] += w[v];
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    const double lse = m + std::log(sum);
    for (double& l : logits) l -= lse;
    return logits;  // now log-probs
  }

  // Total log-probability of the completion, summed over its tokens.
  double score(const std::string& prompt, const std::string& completion) const {
    return score_impl(prompt, completion, nullptr);
  }

  // Exact gradient of score() with respect to the flat parameter vector.
  std::pair<double, std::vector<double>> score_with_grad(const std::string& prompt,
                                                         const std::string& completion) const {
    std::vector<double> grad(params_.size(), 0.0);
    double s = score_impl(prompt, completion, &grad);
    return {s, std::move(grad)};
  }

  // Temperature scaling followed by top-p truncation with renormalization.
  std::string sample_one(const std::string& prompt, const SamplingParams& params,
                         std::mt19937_64& rng) const {
    params.validate();
    std::vector<std::string> history = tokenize(prompt);
    const int vocab = vocab_size();
    std::vector<std::string> out_tokens;
    for (int step = 0; step < params.max_output_length; ++step) {
      std::vector<double> lp = step_log_probs(history);
      std::vector<std::pair<double, int>> scaled(static_cast<size_t>(vocab));
      double m = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < vocab; ++v) m = std::max(m, lp[static_cast<size_t>(v)]);
      for (int v = 0; v < vocab; ++v) {
        scaled[static_cast<size_t>(v)] = {(lp[static_cast<size_t>(v)] - m) / params.temperature, v};
      }
      std::sort(scaled.begin(), scaled.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      double z = 0.0;
      for (auto& [l, v] : scaled) {
        l = std::exp(l);
        z += l;
      }
      double cum = 0.0;
      size_t keep = 0;
      for (; keep < scaled.size(); ++keep) {
        cum += scaled[keep].first / z;
        if (cum >= params.top_p) {
          ++keep;
          break;
        }
      }
      keep = std::max<size_t>(1, std::min(keep, scaled.size()));
      double kept_mass = 0.0;
      for (size_t i = 0; i < keep; ++i) kept_mass += scaled[i].first;
      const double u = uniform_unit(rng) * kept_mass;
      double acc = 0.0;
      int chosen = scaled[keep - 1].second;
      for (size_t i = 0; i < keep; ++i) {
        acc += scaled[i].first;
        if (acc >= u) {
          chosen = scaled[i].second;
          break;
        }
      }
      const std::string& token = spec_.vocab[static_cast<size_t>(chosen)];
      if (!spec_.eos_token.empty() && token == spec_.eos_token) break;
      out_tokens.push_back(token);
      history.push_back(token);
    }
    std::string out;
    for (size_t i = 0; i < out_tokens.size(); ++i) {
      if (i > 0) out += ' ';
      out += out_tokens[i];
    }
    return out;
  }

  bool operator==(const TrainablePolicy& other) const {
    return spec_.vocab == other.spec_.vocab && spec_.context_order == other.spec_.context_order &&
           spec_.feature_buckets == other.spec_.feature_buckets &&
           spec_.eos_token == other.spec_.eos_token && params_ == other.params_;
  }

 private:
  double score_impl(const std::string& prompt, const std::string& completion,
                    std::vector<double>* grad) const {
    std::vector<std::string> history = tokenize(prompt);
    const int vocab = vocab_size();
    double total = 0.0;
    for (const std::string& token : tokenize(completion)) {
      const int target = token_id(token);
      std::vector<double> lp = step_log_probs(history);
      total += lp[static_cast<size_t>(target)];
      if (grad) {
        for (int row : active_features(history)) {
          double* g = &(*grad)[static_cast<size_t>(row) * static_cast<size_t>(vocab)];
          for (int v = 0; v < vocab; ++v) {
            g[v] += (v == target ? 1.0 : 0.0) - std::exp(lp[static_cast<size_t>(v)]);
          }
        }
      }
      history.push_back(token);
    }
    return total;
  }

  PolicySpec spec_;
  std::vector<double> params_;
  std::map<std::string, int> token_ids_;
};

// Mean negative log-likelihood over (prompt, target) pairs, with the
// matching exact gradient. Stands in for supervised fine-tuning losses at
// toy scale.
struct NllResult {
  double loss = 0.0;
  std::vector<double> grad;
};

inline NllResult policy_nll_loss(const TrainablePolicy& policy,
                                 std::span<const std::pair<std::string, std::string>> batch) {
  if (batch.empty()) throw ConfigError("NLL batch must be non-empty");
  NllResult out;
  out.grad.assign(policy.param_count(), 0.0);
  for (const auto& [prompt, target] : batch) {
    auto [s, g] = policy.score_with_grad(prompt, target);
    out.loss -= s;
    for (size_t i = 0; i < g.size(); ++i) out.grad[i] -= g[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

// Scorer adapter over a frozen policy copy. Sampling draws from an
// internal seeded RNG, so a fixed seed reproduces the sample stream.
class PolicyScorer : public Scorer {
 public:
  explicit PolicyScorer(TrainablePolicy policy, uint64_t sample_seed = 0)
      : policy_(std::move(policy)), rng_(sample_seed) {}

  std::vector<std::string> sample(const std::string& prompt, const SamplingParams& params) override {
    params.validate();
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(params.n));
    for (int i = 0; i < params.n; ++i) out.push_back(policy_.sample_one(prompt, params, rng_));
    return out;
  }

  double score(const std::string& prompt, const std::string& completion) override {
    return policy_.score(prompt, completion);
  }

  const TrainablePolicy& policy() const { return policy_; }

 private:
  TrainablePolicy policy_;
  std::mt19937_64 rng_;
};

// Checkpoint: flat parameter vector plus the policy spec and run metadata.
inline void save_checkpoint(const TrainablePolicy& policy, const std::filesystem::path& path,
                            const nlohmann::json& meta) {
  nlohmann::json j{{"_meta", meta}, {"policy", policy.spec().to_json()}, {"params", policy.params()}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out << j.dump(2) << "\n";
}

inline TrainablePolicy load_checkpoint(const std::filesystem::path& path,
                                       nlohmann::json* meta_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  TrainablePolicy policy(PolicySpec::from_json(j.at("policy")));
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != policy.param_count()) {
    throw ParseError("checkpoint parameter count mismatch in " + path.string());
  }
  policy.mutable_params() = std::move(params);
  if (meta_out && j.contains("_meta")) *meta_out = j["_meta"];
  return policy;
}

}  // namespace ddp
