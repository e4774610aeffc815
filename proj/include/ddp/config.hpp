// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key-value run configuration with ${ENV_VAR} interpolation for
// secrets, a stable fingerprint embedded in every artifact, and the scorer
// factory that turns scorer.<role>.* keys into concrete implementations.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "ddp/error.hpp"
#include "ddp/policy.hpp"
#include "ddp/remote_scorer.hpp"
#include "ddp/scorer.hpp"
#include "ddp/util.hpp"

namespace ddp {

class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in) {
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      size_t eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      }
      std::string key(trim(body.substr(0, eq)));
      std::string value(trim(body.substr(eq + 1)));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      }
      cfg.entries_[key] = interpolate_env(value);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    return parse(in);
  }

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: \"" + it->second + "\"");
    }
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      size_t pos = 0;
      long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an integer: \"" + it->second + "\"");
    }
  }

  uint64_t get_uint64(const std::string& key, uint64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an unsigned integer: \"" + it->second + "\"");
    }
  }

  // Hash over the sorted effective entries; identical configs (after flag
  // overrides) produce identical artifact fingerprints.
  std::string fingerprint() const {
    uint64_t h = fnv1a64("ddparse-config-v1");
    for (const auto& [k, v] : entries_) {
      h = fnv1a64(k, h);
      h = fnv1a64("=", h);
      h = fnv1a64(v, h);
      h = fnv1a64("\n", h);
    }
    return to_hex(h);
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  static std::string interpolate_env(const std::string& value) {
    std::string out;
    size_t i = 0;
    while (i < value.size()) {
      if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
        size_t close = value.find('}', i + 2);
        if (close == std::string::npos) throw ConfigError("unterminated ${...} in config value");
        std::string var = value.substr(i + 2, close - i - 2);
        const char* env = std::getenv(var.c_str());
        if (!env) throw ConfigError("environment variable not set: " + var);
        out += env;
        i = close + 1;
      } else {
        out += value[i++];
      }
    }
    return out;
  }

  std::map<std::string, std::string> entries_;
};

inline SamplingParams sampling_from_config(const Config& cfg) {
  SamplingParams p;
  p.temperature = cfg.get_double("sampling.temperature", 0.6);
  p.top_p = cfg.get_double("sampling.top_p", 0.9);
  p.max_output_length = static_cast<int>(cfg.get_int("sampling.max_output_length", 512));
  p.validate();
  return p;
}

// Builds the scorer configured under scorer.<role>.* — kind is one of
// mock (script = path to a script JSON), remote (endpoint, auth_env, ...),
// or policy (checkpoint, sample_seed).
inline std::unique_ptr<Scorer> make_scorer(const Config& cfg, const std::string& role) {
  const std::string prefix = "scorer." + role + ".";
  const std::string kind = cfg.get_string(prefix + "kind");
  if (kind.empty()) {
    throw ConfigError("missing config key " + prefix + "kind (mock|remote|policy)");
  }
  if (kind == "mock") {
    const std::string script_path = cfg.require_string(prefix + "script");
    std::ifstream in(script_path);
    if (!in) throw IoError("cannot open mock script: " + script_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("malformed mock script " + script_path + ": " + e.what());
    }
    return std::make_unique<MockScorer>(MockScorer::from_json(j));
  }
  if (kind == "remote") {
    RemoteConfig rc;
    rc.endpoint = cfg.require_string(prefix + "endpoint");
    rc.auth_env = cfg.get_string(prefix + "auth_env");
    rc.max_retries = static_cast<int>(cfg.get_int(prefix + "max_retries", 3));
    rc.initial_backoff_ms = static_cast<int>(cfg.get_int(prefix + "initial_backoff_ms", 100));
    rc.max_backoff_ms = static_cast<int>(cfg.get_int(prefix + "max_backoff_ms", 5000));
    rc.timeout_seconds = static_cast<int>(cfg.get_int(prefix + "timeout_seconds", 30));
    rc.max_in_flight = static_cast<int>(cfg.get_int(prefix + "max_in_flight", 4));
    return std::make_unique<RemoteScorer>(rc);
  }
  if (kind == "policy") {
    const std::string checkpoint = cfg.require_string(prefix + "checkpoint");
    TrainablePolicy policy = load_checkpoint(checkpoint);
    const uint64_t seed = cfg.get_uint64(prefix + "sample_seed", cfg.get_uint64("seed", 0));
    return std::make_unique<PolicyScorer>(std::move(policy), seed);
  }
  throw ConfigError("unknown scorer kind \"" + kind + "\" for role " + role);
}

}  // namespace ddp
