// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#include "ddp/scorer.hpp"

#include <cmath>

#include <doctest.h>

using namespace ddp;

TEST_CASE("sampling params validation") {
  SamplingParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.temperature == doctest::Approx(0.6));
  CHECK(p.top_p == doctest::Approx(0.9));
  CHECK(p.max_output_length == 512);

  p.temperature = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = SamplingParams{};
  p.top_p = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = SamplingParams{};
  p.n = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("mock scorer returns scripted scores") {
  MockScorer mock;
  mock.add_score("the prompt", "the completion", std::log(0.5));
  CHECK(mock.score("the prompt", "the completion") == doctest::Approx(-0.6931).epsilon(1e-4));
  CHECK(mock.score_calls() == 1);

  CHECK_THROWS_AS(mock.score("other prompt", "x"), ScriptError);
  CHECK_THROWS_AS(mock.score("the prompt", "unknown completion"), ScriptError);
}

TEST_CASE("mock scorer consumes samples in order") {
  MockScorer mock;
  mock.add_samples("p", {"a", "b", "c", "d", "e"});
  SamplingParams params;
  params.n = 2;
  CHECK(mock.sample("p", params) == std::vector<std::string>{"a", "b"});
  CHECK(mock.sample("p", params) == std::vector<std::string>{"c", "d"});
  CHECK_THROWS_AS(mock.sample("p", params), ScriptError);  // only one left
  params.n = 1;
  CHECK(mock.sample("p", params) == std::vector<std::string>{"e"});
  CHECK(mock.sample_calls() == 4);
  CHECK_THROWS_AS(mock.sample("unscripted", params), ScriptError);
}

TEST_CASE("mock scorer script round-trips through json") {
  MockScorer mock;
  mock.add_samples("prompt one", {"s1", "s2"});
  mock.add_score("prompt one", "s1", -1.25);
  MockScorer back = MockScorer::from_json(mock.to_json());
  SamplingParams params;
  params.n = 2;
  CHECK(back.sample("prompt one", params) == std::vector<std::string>{"s1", "s2"});
  CHECK(back.score("prompt one", "s1") == doctest::Approx(-1.25));
}

TEST_CASE("prompt keys are stable hashes") {
  CHECK(prompt_key("abc") == prompt_key("abc"));
  CHECK(prompt_key("abc") != prompt_key("abd"));
  CHECK(prompt_key("abc").size() == 16);
  // Pinned value: key stability is part of the script file contract.
  CHECK(prompt_key("abc") == to_hex(fnv1a64("abc")));
}

TEST_CASE("mock_from_script builds the scripted scorer") {
  ScriptMap script;
  script[prompt_key("q")] = {{"only"}, {{"only", -2.0}}};
  MockScorer mock = mock_from_script(script);
  SamplingParams params;
  params.n = 1;
  CHECK(mock.sample("q", params) == std::vector<std::string>{"only"});
  CHECK(mock.score("q", "only") == doctest::Approx(-2.0));
}
