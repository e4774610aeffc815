// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Contribution-aware preference optimization: the pairwise DPO-style loss
// reweighted per pair by sigmoid(mu * contribution gap), with exact
// gradients over the trainable policy and a desk-scale gradient-descent
// trainer. The weight is a constant with respect to trainable parameters;
// with weight_override = 1 the loss is standard DPO.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/policy.hpp"
#include "ddp/util.hpp"

namespace ddp {

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) via the softplus identity; never overflows.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

struct CpoConfig {
  double eta = 0.1;  // DPO scaling hyperparameter
  double mu = 0.7;   // gap-smoothing scale (0.5 for Molweni-style runs)
  double learning_rate = 0.05;
  int epochs = 1;
  int batch_size = 8;
  uint64_t shuffle_seed = 0;
  std::optional<double> weight_override;  // 1.0 => standard DPO

  void validate() const {
    if (!(eta > 0)) throw ConfigError("eta must be > 0");
    if (mu < 0) throw ConfigError("mu must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

// Log-probs of the preferred/dispreferred completions under the trainable
// and frozen reference policies.
struct PairScores {
  double lp_plus_trained = 0.0;
  double lp_plus_ref = 0.0;
  double lp_minus_trained = 0.0;
  double lp_minus_ref = 0.0;
};

inline double margin(const PairScores& s, double eta) {
  return eta * ((s.lp_plus_trained - s.lp_plus_ref) - (s.lp_minus_trained - s.lp_minus_ref));
}

inline double pair_weight(double g, double mu, std::optional<double> weight_override = std::nullopt) {
  return weight_override ? *weight_override : stable_sigmoid(mu * g);
}

inline double pair_loss(double f, double g, double mu,
                        std::optional<double> weight_override = std::nullopt) {
  const double w = pair_weight(g, mu, weight_override);
  return -(w * log_sigmoid(f) + (1.0 - w) * log_sigmoid(-f));
}

// One training example: the clarification prompt plus the preferred and
// dispreferred completions and their contribution gap.
struct CpoExample {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double g = 0.0;
};

// Mean loss over raw score tuples; no policies involved. Shared by the
// scored path below and by equivalence checks against reference losses.
inline double batch_loss_from_scores(std::span<const PairScores> scores, std::span<const double> gaps,
                                     const CpoConfig& config) {
  if (scores.empty() || scores.size() != gaps.size()) {
    throw ConfigError("batch_loss_from_scores requires matching non-empty score/gap lists");
  }
  double total = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    total += pair_loss(margin(scores[i], config.eta), gaps[i], config.mu, config.weight_override);
  }
  return total / static_cast<double>(scores.size());
}

struct BatchResult {
  double loss = 0.0;
  std::vector<double> grad;
  double mean_weight = 0.0;
};

inline BatchResult batch_loss_and_grad(const TrainablePolicy& policy,
                                       const TrainablePolicy& ref_policy,
                                       std::span<const CpoExample> batch, const CpoConfig& config) {
  config.validate();
  if (batch.empty()) throw ConfigError("CPO batch must be non-empty");
  BatchResult out;
  out.grad.assign(policy.param_count(), 0.0);
  for (const CpoExample& ex : batch) {
    auto [lp_plus, grad_plus] = policy.score_with_grad(ex.prompt, ex.chosen);
    auto [lp_minus, grad_minus] = policy.score_with_grad(ex.prompt, ex.rejected);
    PairScores s;
    s.lp_plus_trained = lp_plus;
    s.lp_minus_trained = lp_minus;
    s.lp_plus_ref = ref_policy.score(ex.prompt, ex.chosen);
    s.lp_minus_ref = ref_policy.score(ex.prompt, ex.rejected);

    const double f = margin(s, config.eta);
    const double w = pair_weight(ex.g, config.mu, config.weight_override);
    out.loss += pair_loss(f, ex.g, config.mu, config.weight_override);
    out.mean_weight += w;

    // dL/df of -(w ln sigma(f) + (1-w) ln sigma(-f)); w is constant.
    const double dl_df = -w * stable_sigmoid(-f) + (1.0 - w) * stable_sigmoid(f);
    const double scale = dl_df * config.eta;
    for (size_t i = 0; i < out.grad.size(); ++i) {
      out.grad[i] += scale * (grad_plus[i] - grad_minus[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.mean_weight *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

// Fraction of pairs with positive margin under the current parameters.
inline double preference_accuracy(const TrainablePolicy& policy, const TrainablePolicy& ref_policy,
                                  std::span<const CpoExample> examples, double eta) {
  if (examples.empty()) return 0.0;
  int positive = 0;
  for (const CpoExample& ex : examples) {
    PairScores s;
    s.lp_plus_trained = policy.score(ex.prompt, ex.chosen);
    s.lp_minus_trained = policy.score(ex.prompt, ex.rejected);
    s.lp_plus_ref = ref_policy.score(ex.prompt, ex.chosen);
    s.lp_minus_ref = ref_policy.score(ex.prompt, ex.rejected);
    if (margin(s, eta) > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(examples.size());
}

struct TrainingStep {
  int step = 0;
  double batch_loss = 0.0;  // minibatch loss at the pre-update parameters
  double full_loss = 0.0;   // whole-set loss after the update
  double mean_weight = 0.0;
  double preference_acc = 0.0;  // whole-set accuracy after the update
};

struct TrainingLog {
  double initial_loss = 0.0;
  double initial_preference_acc = 0.0;
  std::vector<TrainingStep> steps;

  nlohmann::json to_json() const {
    nlohmann::json steps_json = nlohmann::json::array();
    for (const auto& s : steps) {
      steps_json.push_back({{"step", s.step},
                            {"batch_loss", s.batch_loss},
                            {"full_loss", s.full_loss},
                            {"mean_weight", s.mean_weight},
                            {"preference_acc", s.preference_acc}});
    }
    return {{"initial_loss", initial_loss},
            {"initial_preference_acc", initial_preference_acc},
            {"steps", steps_json}};
  }
};

// Plain gradient descent over seeded-shuffled minibatches. ref_policy must
// be a frozen copy of the pre-training parameters; it is never touched.
inline TrainingLog train_cpo(TrainablePolicy& policy, const TrainablePolicy& ref_policy,
                             std::span<const CpoExample> examples, const CpoConfig& config) {
  config.validate();
  if (examples.empty()) throw ConfigError("CPO training requires at least one pair");

  TrainingLog log;
  log.initial_loss = batch_loss_and_grad(policy, ref_policy, examples, config).loss;
  log.initial_preference_acc = preference_accuracy(policy, ref_policy, examples, config.eta);

  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(config.shuffle_seed);

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    seeded_shuffle(order, rng);
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      std::vector<CpoExample> minibatch;
      minibatch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) minibatch.push_back(examples[order[i]]);

      BatchResult br = batch_loss_and_grad(policy, ref_policy, minibatch, config);
      if (!std::isfinite(br.loss)) {
        throw Error("CPO training diverged at step " + std::to_string(step + 1) +
                    ": non-finite batch loss");
      }
      auto& params = policy.mutable_params();
      for (size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * br.grad[i];

      TrainingStep ts;
      ts.step = ++step;
      ts.batch_loss = br.loss;
      ts.full_loss = batch_loss_and_grad(policy, ref_policy, examples, config).loss;
      ts.mean_weight = br.mean_weight;
      ts.preference_acc = preference_accuracy(policy, ref_policy, examples, config.eta);
      if (!std::isfinite(ts.full_loss)) {
        throw Error("CPO training diverged at step " + std::to_string(step) +
                    ": non-finite full loss");
      }
      log.steps.push_back(ts);
    }
  }
  return log;
}

inline void write_training_log(const TrainingLog& log, const std::filesystem::path& path,
                               const std::optional<nlohmann::json>& meta = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path.string());
  nlohmann::json j = log.to_json();
  if (meta) j["_meta"] = *meta;
  out << j.dump(2) << "\n";
}

}  // namespace ddp
