// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface over the pipeline: corpus ingestion and splitting,
// ambiguous-relation derivation, SFT and preference-pair construction,
// CPO training, gated inference, evaluation, and a gradient self-check.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddp/ddp.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  bool force = false;
  std::optional<uint64_t> seed;
};

ddp::Config effective_config(const CommonOpts& common) {
  ddp::Config cfg;
  if (!common.config_path.empty()) cfg = ddp::Config::load(common.config_path);
  if (common.seed) cfg.set("seed", std::to_string(*common.seed));
  return cfg;
}

nlohmann::json artifact_meta(const ddp::Config& cfg) {
  return {{"tool", "ddparse"},
          {"fingerprint", cfg.fingerprint()},
          {"seed", cfg.get_uint64("seed", 42)}};
}

// Artifacts are never silently overwritten; pass --force to replace.
void require_writable(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw ddp::IoError("refusing to overwrite existing artifact " + path.string() +
                       " (use --force)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require_readable(const fs::path& path) {
  if (!fs::exists(path)) throw ddp::IoError("input not found: " + path.string());
}

ddp::InferParams infer_params_from_config(const ddp::Config& cfg) {
  ddp::InferParams p;
  p.o = static_cast<int>(cfg.get_int("o", 10));
  p.n_clarifications = static_cast<int>(cfg.get_int("n", 5));
  p.context_window = static_cast<int>(cfg.get_int("window", 20));
  p.sampling = ddp::sampling_from_config(cfg);
  return p;
}

ddp::CpoConfig cpo_config_from_config(const ddp::Config& cfg) {
  ddp::CpoConfig c;
  c.eta = cfg.get_double("eta", 0.1);
  c.mu = cfg.get_double("mu", 0.7);
  c.learning_rate = cfg.get_double("learning_rate", 0.05);
  c.epochs = static_cast<int>(cfg.get_int("epochs", 1));
  c.batch_size = static_cast<int>(cfg.get_int("batch_size", 8));
  c.shuffle_seed = cfg.get_uint64("seed", 42);
  if (cfg.has("weight_override")) c.weight_override = cfg.get_double("weight_override", 1.0);
  c.validate();
  return c;
}

std::map<ddp::InstanceId, std::optional<ddp::GoldRelation>> golds_from_corpus(
    const ddp::Corpus& corpus) {
  std::map<ddp::InstanceId, std::optional<ddp::GoldRelation>> golds;
  for (const auto& inst : corpus.instances) golds[inst.id()] = inst.gold;
  return golds;
}

int cmd_ingest(const ddp::Config& cfg, const std::string& in, const std::string& out,
               const std::string& format, bool force) {
  if (format != "normalized") {
    throw ddp::ConfigError("unsupported corpus format \"" + format + "\" (expected: normalized)");
  }
  require_readable(in);
  require_writable(out, force);
  ddp::Corpus corpus = ddp::load_corpus(in);
  ddp::write_corpus(corpus, out, artifact_meta(cfg));
  std::cout << nlohmann::json{{"dialogues", corpus.dialogues.size()},
                              {"instances", corpus.instances.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_split(const ddp::Config& cfg, const std::string& in, const std::string& out_seed,
              const std::string& out_rest, bool force) {
  require_readable(in);
  require_writable(out_seed, force);
  require_writable(out_rest, force);
  ddp::Corpus corpus = ddp::load_corpus(in);
  auto [seed_set, rest] =
      ddp::split_seed(corpus, cfg.get_double("alpha", 0.1), cfg.get_uint64("seed", 42));
  ddp::write_corpus(seed_set, out_seed, artifact_meta(cfg));
  ddp::write_corpus(rest, out_rest, artifact_meta(cfg));
  std::cout << nlohmann::json{{"seed_dialogues", seed_set.dialogues.size()},
                              {"rest_dialogues", rest.dialogues.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_derive_ambiguous(const ddp::Config& cfg, const std::string& corpus_path,
                         const std::string& preds_path, const std::string& out, bool force) {
  require_readable(corpus_path);
  require_readable(preds_path);
  require_writable(out, force);
  ddp::Corpus corpus = ddp::load_corpus(corpus_path);
  auto predictions = ddp::load_predictions(preds_path);
  std::mt19937_64 rng(cfg.get_uint64("seed", 42));

  std::ofstream file(out);
  if (!file) throw ddp::IoError("cannot write " + out);
  file << nlohmann::json{{"_meta", artifact_meta(cfg)}}.dump() << "\n";
  int emitted = 0, missing = 0;
  for (const auto& inst : corpus.instances) {
    if (!inst.gold) continue;
    auto it = predictions.find(inst.id());
    if (it == predictions.end()) {
      ++missing;
      continue;
    }
    ddp::ParseOutput amb = ddp::derive_ambiguous(inst, it->second, rng);
    file << nlohmann::json{
                {"dialogue_id", inst.dialogue_id},
                {"k", inst.k()},
                {"intended", ddp::format_parse_output(ddp::ParseOutput::from_gold(*inst.gold))},
                {"ambiguous", ddp::format_parse_output(amb)}}
                .dump()
         << "\n";
    ++emitted;
  }
  std::cout << nlohmann::json{{"emitted", emitted}, {"missing_predictions", missing}}.dump() << "\n";
  return 0;
}

int cmd_build_sft(const ddp::Config& cfg, const std::string& corpus_path, const std::string& out,
                  bool force) {
  require_readable(corpus_path);
  require_writable(out, force);
  ddp::Corpus seed_set = ddp::load_corpus(corpus_path);
  auto parser = ddp::make_scorer(cfg, "parser");
  auto teacher = ddp::make_scorer(cfg, "teacher");
  std::mt19937_64 rng(cfg.get_uint64("seed", 42));
  ddp::DataprepParams params;
  params.context_window = static_cast<int>(cfg.get_int("window", 20));
  params.teacher_sampling = ddp::sampling_from_config(cfg);
  ddp::SftBuildResult result = ddp::build_clarification_sft(seed_set, *parser, *teacher, rng, params);
  for (const auto& reason : result.skip_log) std::cerr << "skip: " << reason << "\n";
  ddp::export_sft(result.records, out, artifact_meta(cfg));
  std::cout << nlohmann::json{{"records", result.records.size()}, {"skipped", result.skipped}}.dump()
            << "\n";
  return 0;
}

int cmd_build_pairs(const ddp::Config& cfg, const std::string& corpus_path, const std::string& out,
                    bool force) {
  require_readable(corpus_path);
  require_writable(out, force);
  ddp::Corpus rest = ddp::load_corpus(corpus_path);
  auto dcm = ddp::make_scorer(cfg, "dcm");
  auto parser = ddp::make_scorer(cfg, "parser");
  ddp::PreferenceParams params;
  params.n_clarifications = static_cast<int>(cfg.get_int("n", 5));
  params.context_window = static_cast<int>(cfg.get_int("window", 20));
  params.sampling = ddp::sampling_from_config(cfg);
  ddp::PreferenceBuildResult result = ddp::build_preference_dataset(rest, *dcm, *parser, params);
  for (const auto& reason : result.skip_log) std::cerr << "skip: " << reason << "\n";
  ddp::write_pairs(result.pairs, out, artifact_meta(cfg));
  std::cout << nlohmann::json{{"pairs", result.pairs.size()},
                              {"discarded", result.discarded},
                              {"dropped_samples", result.dropped_samples},
                              {"skipped", result.skipped}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train_cpo(const ddp::Config& cfg, const std::string& pairs_path,
                  const std::string& corpus_path, const std::string& init_checkpoint,
                  const std::string& out_checkpoint, const std::string& out_log, bool force) {
  require_readable(pairs_path);
  require_readable(corpus_path);
  require_writable(out_checkpoint, force);
  if (!out_log.empty()) require_writable(out_log, force);

  auto pairs = ddp::load_pairs(pairs_path);
  if (pairs.empty()) throw ddp::ConfigError("pairs file contains no preference pairs");
  ddp::Corpus corpus = ddp::load_corpus(corpus_path);
  const int window = static_cast<int>(cfg.get_int("window", 20));

  std::vector<ddp::CpoExample> examples;
  examples.reserve(pairs.size());
  for (const auto& pair : pairs) {
    const ddp::AnnotatedInstance* inst = corpus.find_instance(pair.context);
    if (!inst) {
      throw ddp::ConfigError("pair references unknown instance " + pair.context.str());
    }
    ddp::CpoExample ex;
    ex.prompt = ddp::render_dcm_prompt(ddp::truncate_context(inst->context, window));
    ex.chosen = pair.plus;
    ex.rejected = pair.minus;
    ex.g = pair.g;
    examples.push_back(std::move(ex));
  }

  ddp::TrainablePolicy policy;
  if (!init_checkpoint.empty()) {
    require_readable(init_checkpoint);
    policy = ddp::load_checkpoint(init_checkpoint);
  } else {
    std::set<std::string> vocab_set;
    for (const auto& ex : examples) {
      for (auto& t : ddp::tokenize(ex.chosen)) vocab_set.insert(t);
      for (auto& t : ddp::tokenize(ex.rejected)) vocab_set.insert(t);
    }
    ddp::PolicySpec spec;
    spec.vocab.assign(vocab_set.begin(), vocab_set.end());
    spec.context_order = static_cast<int>(cfg.get_int("policy.context_order", 2));
    spec.feature_buckets = static_cast<int>(cfg.get_int("policy.feature_buckets", 64));
    policy = ddp::TrainablePolicy(spec, cfg.get_uint64("seed", 42),
                                  cfg.get_double("policy.init_scale", 0.0));
  }
  const ddp::TrainablePolicy ref_policy = policy;  // frozen pre-training copy

  ddp::CpoConfig cpo_cfg = cpo_config_from_config(cfg);
  ddp::TrainingLog log = ddp::train_cpo(policy, ref_policy, examples, cpo_cfg);

  ddp::save_checkpoint(policy, out_checkpoint, artifact_meta(cfg));
  if (!out_log.empty()) ddp::write_training_log(log, out_log, artifact_meta(cfg));

  const double final_loss = log.steps.empty() ? log.initial_loss : log.steps.back().full_loss;
  const double final_acc =
      log.steps.empty() ? log.initial_preference_acc : log.steps.back().preference_acc;
  std::cout << nlohmann::json{{"pairs", examples.size()},
                              {"steps", log.steps.size()},
                              {"initial_loss", log.initial_loss},
                              {"final_loss", final_loss},
                              {"preference_acc", final_acc}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_infer(const ddp::Config& cfg, const std::string& corpus_path, const std::string& out_preds,
              const std::string& out_traces, bool force) {
  require_readable(corpus_path);
  require_writable(out_preds, force);
  if (!out_traces.empty()) require_writable(out_traces, force);

  ddp::Corpus corpus = ddp::load_corpus(corpus_path);
  auto parser = ddp::make_scorer(cfg, "parser");
  auto dcm = ddp::make_scorer(cfg, "dcm");
  ddp::InferParams params = infer_params_from_config(cfg);
  ddp::BatchInferResult result = ddp::batch_infer(corpus, *parser, *dcm, params);

  ddp::write_predictions(result.predictions, out_preds, artifact_meta(cfg));
  if (!out_traces.empty()) {
    std::ofstream file(out_traces);
    if (!file) throw ddp::IoError("cannot write " + out_traces);
    file << nlohmann::json{{"_meta", artifact_meta(cfg)}}.dump() << "\n";
    for (const auto& trace : result.traces) file << ddp::trace_to_json(trace).dump() << "\n";
    file << nlohmann::json{{"_transitions", result.transitions.to_json()},
                           {"errors", result.errors}}
                .dump()
         << "\n";
  }
  for (const auto& err : result.errors) std::cerr << "error: " << err << "\n";
  std::cout << nlohmann::json{{"instances", corpus.instances.size()},
                              {"predicted", result.predictions.size()},
                              {"transitions", result.transitions.to_json()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const ddp::Config& cfg, const std::string& pred_path, const std::string& gold_path,
             const std::string& out, const std::string& format, bool force) {
  require_readable(pred_path);
  require_readable(gold_path);
  if (!out.empty()) require_writable(out, force);

  auto predictions = ddp::load_predictions(pred_path);
  ddp::Corpus gold_corpus = ddp::load_corpus(gold_path);
  ddp::EvalReport report = ddp::evaluate(predictions, golds_from_corpus(gold_corpus));
  nlohmann::json j = ddp::report_to_json(report, format == "full");
  if (!out.empty()) {
    std::ofstream file(out);
    if (!file) throw ddp::IoError("cannot write " + out);
    j["_meta"] = artifact_meta(cfg);
    file << j.dump(2) << "\n";
    j.erase("_meta");
  }
  std::cout << j.dump() << "\n";
  return 0;
}

// Central finite differences against the analytic CPO batch gradient on a
// seeded toy policy; exits nonzero when the max relative error is too big.
int cmd_gradcheck(const ddp::Config& cfg) {
  const uint64_t seed = cfg.get_uint64("seed", 42);
  ddp::PolicySpec spec;
  spec.vocab = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
  spec.context_order = 2;
  spec.feature_buckets = 16;
  ddp::TrainablePolicy policy(spec, seed, 0.5);
  ddp::TrainablePolicy ref(spec, seed + 1, 0.5);

  std::vector<ddp::CpoExample> batch = {
      {"alpha beta", "gamma delta", "eps zeta", 1.5},
      {"beta gamma", "eta theta alpha", "delta", 0.4},
      {"zeta", "alpha eps", "theta gamma beta", 2.5},
  };
  ddp::CpoConfig cpo_cfg;
  cpo_cfg.eta = 0.1;
  cpo_cfg.mu = 0.7;

  ddp::BatchResult analytic = ddp::batch_loss_and_grad(policy, ref, batch, cpo_cfg);
  const double h = 1e-5;
  double max_rel = 0.0;
  auto& params = policy.mutable_params();
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = ddp::batch_loss_and_grad(policy, ref, batch, cpo_cfg).loss;
    params[i] = saved - h;
    const double down = ddp::batch_loss_and_grad(policy, ref, batch, cpo_cfg).loss;
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel =
        std::abs(fd - analytic.grad[i]) / std::max({1.0, std::abs(fd), std::abs(analytic.grad[i])});
    max_rel = std::max(max_rel, rel);
  }
  const bool ok = max_rel < 1e-4;
  std::cout << nlohmann::json{{"params", params.size()},
                              {"max_relative_error", max_rel},
                              {"pass", ok}}
                   .dump()
            << "\n";
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clarification-enhanced dialogue discourse parsing pipeline"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "run configuration file (key = value lines)");
  app.add_flag("--force", common.force, "overwrite existing output artifacts");
  app.add_option("--seed", common.seed, "RNG seed (overrides config)");

  // Flag overrides shared by the pipeline commands; flags win over config.
  std::optional<double> alpha, eta, mu, lr, weight_override, temperature, top_p;
  std::optional<long> o_trials, n_clar, window, epochs, batch_size, max_output_length;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--alpha", alpha, "seed-split fraction");
    sub->add_option("--eta", eta, "DPO scaling hyperparameter");
    sub->add_option("--mu", mu, "contribution-gap smoothing scale");
    sub->add_option("--lr", lr, "learning rate");
    sub->add_option("--weight-override", weight_override, "constant pair weight (1 = DPO)");
    sub->add_option("--o", o_trials, "prediction trials per vote");
    sub->add_option("--n", n_clar, "clarification samples per instance");
    sub->add_option("--window", window, "context window in utterances");
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--batch-size", batch_size, "training minibatch size");
    sub->add_option("--temperature", temperature, "sampling temperature");
    sub->add_option("--top-p", top_p, "nucleus sampling mass");
    sub->add_option("--max-output-length", max_output_length, "sampling length cap");
  };

  std::string in_path, out_path, out_seed, out_rest, preds_path, corpus_path, pairs_path;
  std::string init_checkpoint, out_checkpoint, out_log, out_traces, gold_path;
  std::string report_format = "summary";
  std::string corpus_format = "normalized";

  CLI::App* ingest = app.add_subcommand("ingest", "validate and normalize a corpus file");
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--out", out_path)->required();
  ingest->add_option("--format", corpus_format, "corpus file format")->capture_default_str();

  CLI::App* split = app.add_subcommand("split", "partition a corpus into seed/rest by dialogue");
  split->add_option("--in", in_path)->required();
  split->add_option("--out-seed", out_seed)->required();
  split->add_option("--out-rest", out_rest)->required();
  add_overrides(split);

  CLI::App* derive = app.add_subcommand("derive-ambiguous",
                                        "pair gold relations with ambiguous parser outputs");
  derive->add_option("--corpus", corpus_path)->required();
  derive->add_option("--preds", preds_path)->required();
  derive->add_option("--out", out_path)->required();

  CLI::App* build_sft = app.add_subcommand("build-sft", "construct the clarification SFT dataset");
  build_sft->add_option("--corpus", corpus_path)->required();
  build_sft->add_option("--out", out_path)->required();
  add_overrides(build_sft);

  CLI::App* build_pairs = app.add_subcommand("build-pairs", "construct preference pairs");
  build_pairs->add_option("--corpus", corpus_path)->required();
  build_pairs->add_option("--out", out_path)->required();
  add_overrides(build_pairs);

  CLI::App* train = app.add_subcommand("train-cpo", "preference-optimize the trainable policy");
  train->add_option("--pairs", pairs_path)->required();
  train->add_option("--corpus", corpus_path)->required();
  train->add_option("--init-checkpoint", init_checkpoint);
  train->add_option("--out-checkpoint", out_checkpoint)->required();
  train->add_option("--out-log", out_log);
  add_overrides(train);

  CLI::App* infer = app.add_subcommand("infer", "uncertainty-gated batch parsing");
  infer->add_option("--corpus", corpus_path)->required();
  infer->add_option("--out-preds", out_path)->required();
  infer->add_option("--out-traces", out_traces);
  add_overrides(infer);

  CLI::App* eval = app.add_subcommand("eval", "micro-F1 evaluation of predictions against gold");
  eval->add_option("--pred", preds_path)->required();
  eval->add_option("--gold", gold_path)->required();
  eval->add_option("--out", out_path);
  eval->add_option("--format", report_format)->check(CLI::IsMember({"summary", "full"}));

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference CPO gradient check");
  (void)gradcheck;

  // Global options (--config/--force/--seed) may follow the subcommand name.
  for (CLI::App* s : app.get_subcommands([](CLI::App*) { return true; })) {
    s->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* sub = app.get_subcommands().front();
  try {
    ddp::Config cfg = effective_config(common);
    auto set_if = [&cfg](const char* key, const auto& opt) {
      if (opt) cfg.set(key, std::to_string(*opt));
    };
    set_if("alpha", alpha);
    set_if("eta", eta);
    set_if("mu", mu);
    set_if("learning_rate", lr);
    set_if("weight_override", weight_override);
    set_if("o", o_trials);
    set_if("n", n_clar);
    set_if("window", window);
    set_if("epochs", epochs);
    set_if("batch_size", batch_size);
    set_if("sampling.temperature", temperature);
    set_if("sampling.top_p", top_p);
    set_if("sampling.max_output_length", max_output_length);

    if (sub == ingest) return cmd_ingest(cfg, in_path, out_path, corpus_format, common.force);
    if (sub == split) return cmd_split(cfg, in_path, out_seed, out_rest, common.force);
    if (sub == derive) return cmd_derive_ambiguous(cfg, corpus_path, preds_path, out_path, common.force);
    if (sub == build_sft) return cmd_build_sft(cfg, corpus_path, out_path, common.force);
    if (sub == build_pairs) return cmd_build_pairs(cfg, corpus_path, out_path, common.force);
    if (sub == train) {
      return cmd_train_cpo(cfg, pairs_path, corpus_path, init_checkpoint, out_checkpoint, out_log,
                           common.force);
    }
    if (sub == infer) return cmd_infer(cfg, corpus_path, out_path, out_traces, common.force);
    if (sub == eval) {
      return cmd_eval(cfg, preds_path, gold_path, out_path, report_format, common.force);
    }
    if (sub == gradcheck) return cmd_gradcheck(cfg);
    throw ddp::ConfigError("unknown subcommand");
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"command", sub->get_name()}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  }
}
