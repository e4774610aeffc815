// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// HTTP scorer speaking the minimal two-endpoint protocol:
//   POST /v1/sample {prompt, n, temperature, top_p, max_tokens} -> {samples:[text]}
//   POST /v1/score  {prompt, completion}                        -> {logprob: number}
// Vendor APIs are adapted onto this contract server-side.

#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/scorer.hpp"

namespace ddp {

struct RemoteConfig {
  std::string endpoint;              // e.g. "http://localhost:8080"
  std::string auth_env;              // env var holding the bearer token; empty = no auth
  int max_retries = 3;               // retries after the first attempt
  int initial_backoff_ms = 100;
  int max_backoff_ms = 5000;
  int timeout_seconds = 30;
  int max_in_flight = 4;

  void validate() const {
    if (endpoint.empty()) throw ConfigError("remote endpoint must be configured");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  }
};

class RemoteScorer : public Scorer {
 public:
  explicit RemoteScorer(RemoteConfig config)
      : config_(std::move(config)), in_flight_(config_.max_in_flight) {
    config_.validate();
    if (!config_.auth_env.empty()) {
      if (const char* tok = std::getenv(config_.auth_env.c_str())) {
        bearer_ = tok;
      } else {
        throw ConfigError("auth env var not set: " + config_.auth_env);
      }
    }
  }

  std::vector<std::string> sample(const std::string& prompt, const SamplingParams& params) override {
    params.validate();
    nlohmann::json body{{"prompt", prompt},
                        {"n", params.n},
                        {"temperature", params.temperature},
                        {"top_p", params.top_p},
                        {"max_tokens", params.max_output_length}};
    nlohmann::json resp = post_json("/v1/sample", body);
    if (!resp.contains("samples") || !resp["samples"].is_array()) {
      throw TransportError("sample response missing \"samples\" array");
    }
    std::vector<std::string> out;
    for (const auto& s : resp["samples"]) {
      if (!s.is_string()) throw TransportError("sample response entries must be strings");
      out.push_back(s.get<std::string>());
    }
    if (out.size() != static_cast<size_t>(params.n)) {
      throw TransportError("sample response returned " + std::to_string(out.size()) +
                           " completions, expected " + std::to_string(params.n));
    }
    return out;
  }

  double score(const std::string& prompt, const std::string& completion) override {
    nlohmann::json resp = post_json("/v1/score", {{"prompt", prompt}, {"completion", completion}});
    if (!resp.contains("logprob") || !resp["logprob"].is_number()) {
      throw TransportError("score response missing numeric \"logprob\"");
    }
    double lp = resp["logprob"].get<double>();
    if (!std::isfinite(lp) || lp > 0.0) {
      throw TransportError("score response logprob violates contract: " + std::to_string(lp));
    }
    return lp;
  }

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& sem;
      ~Release() { sem.release(); }
    } release{in_flight_};

    const std::string payload = body.dump();
    int backoff_ms = config_.initial_backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms = std::min(backoff_ms * 2, config_.max_backoff_ms);
      }
      httplib::Client client(config_.endpoint);
      client.set_connection_timeout(config_.timeout_seconds, 0);
      client.set_read_timeout(config_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw TransportError("malformed response body from " + path + ": " + e.what());
        }
      }
      if (res->status == 404 || res->status == 501) {
        throw CapabilityError("endpoint does not support " + path + " (status " +
                              std::to_string(res->status) + ")");
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "server status " + std::to_string(res->status);
        continue;  // transient; retry
      }
      throw TransportError("request to " + path + " rejected with status " +
                           std::to_string(res->status));
    }
    throw TransportError("request to " + path + " failed after " +
                         std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
  }

  RemoteConfig config_;
  std::string bearer_;
  std::counting_semaphore<> in_flight_;
};

}  // namespace ddp
