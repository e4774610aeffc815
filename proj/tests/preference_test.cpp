// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#include "ddp/preference.hpp"

#include <cmath>

#include <doctest.h>

#include "testutil.hpp"

using namespace ddp;

namespace {

std::string dcm_completion(const std::string& clarified) {
  return format_dcm_target({"reasoning about types", "reasoning about the goal", clarified});
}

// Brute-force reference for construct_pair: independent scan of both sides.
PairOutcome construct_pair_oracle(const InstanceId& id, const std::vector<Candidate>& candidates,
                                  double e_base) {
  std::vector<const Candidate*> above, below;
  for (const auto& c : candidates) {
    if (c.e > e_base) above.push_back(&c);
    if (c.e < e_base) below.push_back(&c);
  }
  if (above.empty() || below.empty()) return Discarded{"one-sided"};
  const Candidate* plus = above[0];
  for (const auto* c : above) {
    if (c->e > plus->e) plus = c;
  }
  const Candidate* minus = below[0];
  for (const auto* c : below) {
    if (c->e < minus->e) minus = c;
  }
  PreferencePair p;
  p.context = id;
  p.plus = plus->text;
  p.minus = minus->text;
  p.e_plus = plus->e;
  p.e_minus = minus->e;
  p.e_base = e_base;
  p.g = plus->e - minus->e;
  return p;
}

}  // namespace

TEST_CASE("sample_clarifications returns the parsed clarified texts") {
  Dialogue context = testutil::trade_dialogue();
  MockScorer dcm;
  dcm.add_samples(render_dcm_prompt(context),
                  {dcm_completion("c one"), dcm_completion("c two"), dcm_completion("c three"),
                   dcm_completion("c four"), dcm_completion("c five")});
  SamplingParams params;
  SampledClarifications out = sample_clarifications(dcm, context, 5, params);
  CHECK(out.texts == std::vector<std::string>{"c one", "c two", "c three", "c four", "c five"});
  CHECK(out.dropped == 0);
}

TEST_CASE("unparseable clarifications are dropped with a count") {
  Dialogue context = testutil::trade_dialogue();
  MockScorer dcm;
  dcm.add_samples(render_dcm_prompt(context),
                  {dcm_completion("good one"), "no labels here", dcm_completion("good two"),
                   "CTR: only ctr", "DGR: orphan"});
  SamplingParams params;
  SampledClarifications out = sample_clarifications(dcm, context, 5, params);
  CHECK(out.texts == std::vector<std::string>{"good one", "good two"});
  CHECK(out.dropped == 3);

  CHECK_THROWS_AS(sample_clarifications(dcm, context, 0, params), ConfigError);
}

TEST_CASE("contribution_score scores the gold string under the clarified context") {
  Dialogue context = testutil::trade_dialogue();
  GoldRelation gold{6, 5, RelationType::comment};

  Dialogue clarified = substitute_clarification(context, "sorry about the stolen resources...");
  MockScorer parser;
  parser.add_score(render_dp_prompt(clarified, 6), "u6, u5 : comment", std::log(0.5));

  double e = contribution_score(parser, context, "sorry about the stolen resources...", gold);
  CHECK(e == doctest::Approx(-0.69314718).epsilon(1e-8));
}

TEST_CASE("identity clarification reproduces the baseline score exactly") {
  Dialogue context = testutil::trade_dialogue();
  GoldRelation gold{6, 5, RelationType::comment};
  MockScorer parser;
  parser.add_score(render_dp_prompt(context, 6), "u6, u5 : comment", -1.875);

  double baseline = parser.score(render_dp_prompt(context, 6), "u6, u5 : comment");
  double identity = contribution_score(parser, context, context.last().text, gold);
  CHECK(identity == baseline);  // exact: same bytes, same scorer
}

TEST_CASE("higher scripted probability gives a higher contribution score") {
  Dialogue context = testutil::trade_dialogue();
  GoldRelation gold{6, 5, RelationType::comment};
  MockScorer parser;
  Dialogue weak = substitute_clarification(context, "weak clarification");
  Dialogue strong = substitute_clarification(context, "strong clarification");
  parser.add_score(render_dp_prompt(weak, 6), "u6, u5 : comment", std::log(0.2));
  parser.add_score(render_dp_prompt(strong, 6), "u6, u5 : comment", std::log(0.8));
  CHECK(contribution_score(parser, context, "strong clarification", gold) >
        contribution_score(parser, context, "weak clarification", gold));
}

TEST_CASE("construct_pair picks extremes around the baseline") {
  InstanceId id{"d", 6};
  std::vector<Candidate> candidates = {
      {"a", -1.0}, {"b", -1.5}, {"c", -2.5}, {"d", -3.0}, {"e", -2.2}};
  PairOutcome outcome = construct_pair(id, candidates, -2.0);
  auto* pair = std::get_if<PreferencePair>(&outcome);
  REQUIRE(pair != nullptr);
  CHECK(pair->plus == "a");
  CHECK(pair->e_plus == doctest::Approx(-1.0));
  CHECK(pair->minus == "d");
  CHECK(pair->e_minus == doctest::Approx(-3.0));
  CHECK(pair->g == doctest::Approx(2.0));
  CHECK(pair->e_plus > pair->e_base);
  CHECK(pair->e_base > pair->e_minus);
}

TEST_CASE("one-sided candidate sets are discarded") {
  InstanceId id{"d", 6};
  CHECK(std::holds_alternative<Discarded>(
      construct_pair(id, {{"a", -1.0}, {"b", -0.5}}, -2.0)));  // all above
  CHECK(std::holds_alternative<Discarded>(
      construct_pair(id, {{"a", -3.0}, {"b", -4.0}}, -2.0)));  // all below
  // Scores equal to the baseline belong to neither side.
  CHECK(std::holds_alternative<Discarded>(
      construct_pair(id, {{"a", -2.0}, {"b", -1.0}}, -2.0)));

  auto outcome = construct_pair(id, {{"hi", -1.0}, {"lo", -9.0}}, -2.0);
  auto* pair = std::get_if<PreferencePair>(&outcome);
  REQUIRE(pair != nullptr);
  CHECK(pair->plus == "hi");
  CHECK(pair->minus == "lo");

  CHECK_THROWS_AS(construct_pair(id, {}, 0.0), ConfigError);
}

TEST_CASE("ties keep the first occurrence") {
  InstanceId id{"d", 6};
  auto outcome =
      construct_pair(id, {{"p1", -1.0}, {"p2", -1.0}, {"m1", -3.0}, {"m2", -3.0}}, -2.0);
  auto* pair = std::get_if<PreferencePair>(&outcome);
  REQUIRE(pair != nullptr);
  CHECK(pair->plus == "p1");
  CHECK(pair->minus == "m1");
}

TEST_CASE("construct_pair agrees with the brute-force oracle on random vectors") {
  std::mt19937_64 rng(19);
  InstanceId id{"r", 4};
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + static_cast<int>(rng() % 7);
    std::vector<Candidate> candidates;
    for (int i = 0; i < n; ++i) {
      // Coarse grid so exact ties with the baseline do occur.
      double e = -0.5 * static_cast<double>(rng() % 17);
      candidates.push_back({"c" + std::to_string(i), e});
    }
    double e_base = -0.5 * static_cast<double>(rng() % 17);
    PairOutcome got = construct_pair(id, candidates, e_base);
    PairOutcome expected = construct_pair_oracle(id, candidates, e_base);
    REQUIRE(got.index() == expected.index());
    if (auto* p = std::get_if<PreferencePair>(&got)) {
      auto* q = std::get_if<PreferencePair>(&expected);
      CHECK(*p == *q);
      CHECK(p->g > 0.0);
      CHECK(p->e_plus > e_base);
      CHECK(p->e_minus < e_base);
    }
  }
}

TEST_CASE("build_preference_dataset emits pairs with full provenance") {
  Corpus corpus;
  corpus.name = "pref";
  {
    Dialogue d = testutil::trade_dialogue();
    std::map<int, GoldRelation> by_child{{6, GoldRelation{6, 5, RelationType::comment}}};
    ddp::detail::append_instances(d, by_child, corpus.instances);
    corpus.dialogues.push_back(std::move(d));
  }

  Dialogue context = corpus.dialogues[0];
  MockScorer dcm;
  dcm.add_samples(render_dcm_prompt(context),
                  {dcm_completion("helps a lot"), dcm_completion("hurts"), "garbage",
                   dcm_completion("neutral-ish"), dcm_completion("also hurts")});

  MockScorer parser;
  const std::string gold_str = "u6, u5 : comment";
  parser.add_score(render_dp_prompt(context, 6), gold_str, -2.0);  // baseline
  auto add = [&](const std::string& u_c, double lp) {
    parser.add_score(render_dp_prompt(substitute_clarification(context, u_c), 6), gold_str, lp);
  };
  add("helps a lot", -1.0);
  add("hurts", -3.5);
  add("neutral-ish", -1.9);
  add("also hurts", -2.6);

  PreferenceParams params;
  params.n_clarifications = 4;  // 4 parses consumed; "garbage" drops one
  PreferenceBuildResult result = build_preference_dataset(corpus, dcm, parser, params);

  REQUIRE(result.pairs.size() == 1);
  const PreferencePair& pair = result.pairs[0];
  CHECK(pair.context.dialogue_id == "trade");
  CHECK(pair.context.k == 6);
  CHECK(pair.plus == "helps a lot");
  CHECK(pair.minus == "hurts");
  CHECK(pair.e_plus == doctest::Approx(-1.0));
  CHECK(pair.e_minus == doctest::Approx(-3.5));
  CHECK(pair.e_base == doctest::Approx(-2.0));
  CHECK(pair.g == doctest::Approx(2.5));
  CHECK(result.dropped_samples == 1);
  CHECK(result.skipped == 5);  // the five no-gold instances of the dialogue
}

TEST_CASE("instances whose candidates are one-sided emit no pair") {
  Corpus corpus;
  Dialogue d = testutil::make_dialogue("mono", 2);
  std::map<int, GoldRelation> by_child{{2, GoldRelation{2, 1, RelationType::result}}};
  ddp::detail::append_instances(d, by_child, corpus.instances);
  corpus.dialogues.push_back(d);

  Dialogue context = corpus.dialogues[0];
  MockScorer dcm;
  dcm.add_samples(render_dcm_prompt(context), {dcm_completion("a"), dcm_completion("b")});
  MockScorer parser;
  const std::string gold_str = "u2, u1 : result";
  parser.add_score(render_dp_prompt(context, 2), gold_str, -5.0);
  parser.add_score(render_dp_prompt(substitute_clarification(context, "a"), 2), gold_str, -1.0);
  parser.add_score(render_dp_prompt(substitute_clarification(context, "b"), 2), gold_str, -2.0);

  PreferenceParams params;
  params.n_clarifications = 2;
  PreferenceBuildResult result = build_preference_dataset(corpus, dcm, parser, params);
  CHECK(result.pairs.empty());
  CHECK(result.discarded == 1);
}

TEST_CASE("pipeline prompts use the truncated context window") {
  Corpus corpus;
  Dialogue d = testutil::make_dialogue("long", 25);
  std::map<int, GoldRelation> by_child{{25, GoldRelation{25, 24, RelationType::comment}}};
  ddp::detail::append_instances(d, by_child, corpus.instances);
  corpus.dialogues.push_back(d);
  // Keep only the k=25 instance; the mock script covers nothing else.
  corpus.instances.erase(corpus.instances.begin(), corpus.instances.end() - 1);

  const Dialogue window = truncate_context(d, 20);  // turns 6..25
  MockScorer dcm;
  dcm.add_samples(render_dcm_prompt(window), {dcm_completion("short and clear")});
  MockScorer parser;
  const std::string gold_str = "u25, u24 : comment";
  parser.add_score(render_dp_prompt(window, 25), gold_str, -2.0);
  parser.add_score(render_dp_prompt(substitute_clarification(window, "short and clear"), 25),
                   gold_str, -1.0);

  PreferenceParams params;
  params.n_clarifications = 1;
  params.context_window = 20;
  // Unscripted prompts throw, so success proves the window was applied.
  PreferenceBuildResult result = build_preference_dataset(corpus, dcm, parser, params);
  CHECK(result.skipped == 0);
  CHECK(result.discarded == 1);  // single candidate sits above the baseline
}

TEST_CASE("empty rest set gives an empty pair list") {
  Corpus empty;
  MockScorer dcm, parser;
  PreferenceBuildResult result = build_preference_dataset(empty, dcm, parser, {});
  CHECK(result.pairs.empty());
  CHECK(result.discarded == 0);
}

TEST_CASE("pairs round-trip through the artifact file") {
  testutil::TempDir tmp("pairs");
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 7; ++i) {
    PreferencePair p;
    p.context = {"d" + std::to_string(i), 3};
    p.plus = "plus text " + std::to_string(i);
    p.minus = "minus text";
    p.e_plus = -1.0 - 0.001 * i;
    p.e_minus = -3.33333333333 - i;
    p.e_base = -2.5;
    p.g = p.e_plus - p.e_minus;
    pairs.push_back(p);
  }
  write_pairs(pairs, tmp.file("pairs.jsonl"), nlohmann::json{{"seed", 1}});
  CHECK(load_pairs(tmp.file("pairs.jsonl")) == pairs);
}
