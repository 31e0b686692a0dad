// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "neoword/cli.hpp"
#include "neoword/errors.hpp"
#include "neoword/lm/tiny_lang.hpp"

using namespace neoword;
namespace fs = std::filesystem;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::invalid_config;
}

// Desk-sized experiment: small pretrained model, tiny teacher, one neologism.
KvConfig small_experiment_kv(const fs::path& out_dir) {
  KvConfig kv;
  kv.set("model.d", "16");
  kv.set("model.layers", "1");
  kv.set("model.heads", "2");
  kv.set("model.ff_mult", "2");
  kv.set("model.context_len", "64");
  kv.set("model.seed", "9");
  kv.set("model.pretrain_steps", "60");
  kv.set("model.pretrain_batch", "8");
  kv.set("model.pretrain_lr", "3e-3");
  kv.set("corpus.docs", "96");
  kv.set("corpus.seed", "2");
  kv.set("corpus.train_instructions", "6");
  kv.set("corpus.eval_instructions", "4");
  kv.set("neologism.surface", "~brief");
  kv.set("neologism.init_seed", "11");
  kv.set("neologism.concept", "short-text");
  kv.set("datagen.teacher", "tiny");
  kv.set("datagen.concept_prompt", "short-text");
  kv.set("datagen.repeats", "1");
  kv.set("train.loss", "nll");
  kv.set("train.steps", "20");
  kv.set("train.learning_rate", "1e-2");
  kv.set("train.batch_size", "4");
  kv.set("eval.concepts", "short-text");
  kv.set("eval.subsets", "short-text");
  kv.set("eval.max_new_tokens", "24");
  kv.set("out.dir", out_dir.string());
  return kv;
}

}  // namespace

TEST_CASE("experiment config defaults and key mapping") {
  ExperimentConfig c = ExperimentConfig::from_kv(KvConfig{});
  CHECK(c.backend == "reference");
  CHECK(c.model.d == 32);
  CHECK(c.corpus_docs == 256);
  CHECK(c.teacher == "tiny");
  CHECK(c.repeats == 2);
  CHECK(c.judge == "none");
  CHECK(c.summarizer == "stub");
  CHECK(c.out_dir == fs::path("runs"));
  CHECK(c.eval_concepts.empty());

  KvConfig kv;
  kv.set("model.d", "24");
  kv.set("train.loss", "apo_up");
  kv.set("train.beta", "0.2");
  kv.set("train.steps", "7");
  kv.set("eval.concepts", "short-text, use-like");
  kv.set("eval.subsets", "short+numerical|likely");
  kv.set("eval.custom.terse", "shorter_than:0.6");
  ExperimentConfig parsed = ExperimentConfig::from_kv(kv);
  CHECK(parsed.model.d == 24);
  CHECK(parsed.train.loss == LossKind::apo_up);
  CHECK(parsed.train.beta == 0.2);
  CHECK(parsed.train.steps == 7);
  CHECK(parsed.eval_concepts == std::vector<std::string>{"short-text", "use-like"});
  REQUIRE(parsed.eval_subsets.size() == 2);
  CHECK(parsed.eval_subsets[0] == std::vector<std::string>{"short", "numerical"});
  CHECK(parsed.eval_subsets[1] == std::vector<std::string>{"likely"});
  REQUIRE(parsed.custom_concepts.count("terse") == 1);
  CHECK(parsed.custom_concepts.at("terse").metric == MetricKind::char_length);
  CHECK(parsed.custom_concepts.at("terse").length_ratio == 0.6);
  CHECK(resolve_concept(parsed, "terse").name == "terse");
  CHECK(resolve_concept(parsed, "short-text").metric == MetricKind::word_count);

  KvConfig unknown;
  unknown.set("modle.d", "16");
  CHECK(code_of([&] { ExperimentConfig::from_kv(unknown); }) == Errc::config_error);

  KvConfig badBackend;
  badBackend.set("backend", "quantum");
  CHECK(code_of([&] { ExperimentConfig::from_kv(badBackend); }) == Errc::config_error);
}

TEST_CASE("experiment config loads files and applies overrides in order") {
  auto dir = neoword::testing::temp_dir("config-file");
  write_text_file(dir / "exp.conf",
                  "# comment\n"
                  "model.d = 16\n"
                  "neologism.surface = ~zap\n"
                  "\n"
                  "train.steps = 5\n");
  ExperimentConfig c = ExperimentConfig::load(dir / "exp.conf", {"model.d=24", "train.steps=9"});
  CHECK(c.model.d == 24);
  CHECK(c.train.steps == 9);
  CHECK(c.surface == "~zap");
  CHECK_FALSE(c.checksum().empty());
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "absent.conf"), Error);
}

TEST_CASE("concept specs parse from compact strings") {
  ConceptSpec words = concept_spec_from_string("w", "word_count");
  CHECK(words.metric == MetricKind::word_count);
  CHECK(words.direction == Direction::higher);

  ConceptSpec fewer = concept_spec_from_string("w", "word_count:lower");
  CHECK(fewer.direction == Direction::lower);

  ConceptSpec zap = concept_spec_from_string("z", "prevalence:zap:higher");
  CHECK(zap.metric == MetricKind::prevalence);
  CHECK(zap.target_word == "zap");

  ConceptSpec ratio = concept_spec_from_string("s", "shorter_than:0.5");
  CHECK(ratio.metric == MetricKind::char_length);
  CHECK(ratio.length_ratio == 0.5);

  ConceptSpec lk = concept_spec_from_string("l", "more_likely:0.03");
  CHECK(lk.metric == MetricKind::likelihood_delta);
  CHECK(lk.likelihood_threshold == 0.03);

  ConceptSpec judged = concept_spec_from_string("j", "judged:wrong-answer");
  CHECK(judged.metric == MetricKind::judge);
  CHECK(judged.rubric == "wrong-answer");

  ConceptSpec sentences = concept_spec_from_string("ss", "sentence_count:lower");
  CHECK(sentences.metric == MetricKind::sentence_count);

  CHECK(code_of([] { concept_spec_from_string("x", ""); }) == Errc::config_error);
  CHECK(code_of([] { concept_spec_from_string("x", "entropy"); }) == Errc::config_error);
  CHECK(code_of([] { concept_spec_from_string("x", "prevalence"); }) == Errc::config_error);
  CHECK(code_of([] { concept_spec_from_string("x", "shorter_than:soon"); }) ==
        Errc::config_error);
  CHECK(code_of([] { concept_spec_from_string("x", "word_count:sideways"); }) ==
        Errc::config_error);
}

TEST_CASE("neologism specs come from the inline form or a registry file") {
  ExperimentConfig c;
  c.surface = "~brief";
  c.init_seed = 11;
  c.concept_name = "short-text";
  auto specs = config_neologisms(c);
  REQUIRE(specs.size() == 1);
  CHECK(specs[0].surface == "~brief");
  CHECK(specs[0].concept_name == "short-text");
  CHECK(specs[0].init.kind == InitSource::Kind::seed);
  CHECK(specs[0].init.seed == 11);

  ExperimentConfig tokenInit = c;
  tokenInit.init_token = " b";
  auto tok = config_neologisms(tokenInit);
  CHECK(tok[0].init.kind == InitSource::Kind::token);
  CHECK(tok[0].init.token == " b");

  auto dir = neoword::testing::temp_dir("registry");
  ExpandedVocabulary vocab =
      expand_vocabulary(tiny_lang::base_vocabulary(),
                        {{"~a", InitSource::from_seed(1), "short-text"},
                         {"~b", InitSource::from_token(" b"), "use-like"}});
  save_registry(dir / "reg.json", vocab);
  ExperimentConfig fromFile;
  fromFile.registry_path = dir / "reg.json";
  auto loaded = config_neologisms(fromFile);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].surface == "~a");
  CHECK(loaded[1].init.token == " b");

  ExperimentConfig neither;
  CHECK(code_of([&] { config_neologisms(neither); }) == Errc::config_error);
}

TEST_CASE("run ids derive from content and dodge collisions") {
  auto dir = neoword::testing::temp_dir("run-ids");
  std::string id1 = derive_run_id("train", {"a", "b"}, dir);
  std::string id2 = derive_run_id("train", {"a", "b"}, dir);
  CHECK(id1 == id2);
  CHECK(id1.starts_with("train-"));
  CHECK(id1.size() == std::string("train-").size() + 12);

  CHECK(derive_run_id("train", {"a", "c"}, dir) != id1);
  CHECK(derive_run_id("eval", {"a", "b"}, dir) != id1);

  fs::create_directories(dir / id1);
  std::string bumped = derive_run_id("train", {"a", "b"}, dir);
  CHECK(bumped == id1 + "-2");
  fs::create_directories(dir / bumped);
  CHECK(derive_run_id("train", {"a", "b"}, dir) == id1 + "-3");
}

TEST_CASE("run records round trip and notice tampered artifacts") {
  auto dir = neoword::testing::temp_dir("run-record");
  write_text_file(dir / "rows.json", "{\"rows\":[]}");

  RunRecord rec;
  rec.run_id = "train-abc";
  rec.command = "train";
  rec.config_checksum = "deadbeef";
  rec.seed = 3;
  rec.created_at = "2026-01-01T00:00:00Z";
  rec.inputs["dataset"] = "1234";
  rec.artifacts["rows"] = {"rows.json", file_checksum(dir / "rows.json")};
  rec.stats["final_loss"] = 0.25;
  save_run_record(dir, rec);

  RunRecord back = load_run_record(dir);
  CHECK(back.run_id == rec.run_id);
  CHECK(back.command == rec.command);
  CHECK(back.config_checksum == rec.config_checksum);
  CHECK(back.seed == rec.seed);
  CHECK(back.inputs == rec.inputs);
  CHECK(back.stats == rec.stats);
  CHECK(back.artifacts.at("rows").path == "rows.json");
  CHECK_NOTHROW(verify_run_record(dir, back));

  write_text_file(dir / "rows.json", "{\"rows\":[1]}");
  CHECK(code_of([&] { verify_run_record(dir, back); }) == Errc::config_error);

  CHECK_THROWS_AS(load_run_record(dir / "nope"), Error);
}

TEST_CASE("the pipeline runs end to end and reproduces bit-for-bit") {
  auto dir = neoword::testing::temp_dir("pipeline");
  ExperimentConfig config = ExperimentConfig::from_kv(small_experiment_kv(dir / "runs"));

  // ---- datagen ----
  DatagenResult gen = cmd_datagen(config, dir / "dataset.jsonl");
  CHECK(gen.records == 6);  // 6 instructions x 1 repeat
  CHECK(fs::exists(gen.dataset_path));
  CHECK(fs::exists(gen.manifest_path));
  CHECK(read_text_file(gen.manifest_path).find("complete") != std::string::npos);
  auto dataset = load_dataset(gen.dataset_path);
  REQUIRE(dataset.size() == 6);
  for (const auto& ex : dataset) {
    CHECK(ex.instruction.find("~brief") != std::string::npos);
    CHECK(ex.concepts == std::vector<std::string>{"short-text"});
    CHECK(ex.chosen != ex.rejected);
  }

  DatagenResult gen2 = cmd_datagen(config, dir / "dataset2.jsonl");
  CHECK(read_text_file(gen2.dataset_path) == read_text_file(gen.dataset_path));

  // ---- train ----
  TrainOutcome train1 = cmd_train(config, gen.dataset_path);
  CHECK(fs::exists(train1.run_dir / "rows.json"));
  CHECK(fs::exists(train1.run_dir / "run.json"));
  CHECK(train1.record.command == "train");
  CHECK(train1.record.stats.count("final_loss") == 1);
  CHECK(train1.record.inputs.at("dataset") == dataset_checksum(dataset));
  REQUIRE(train1.result.rows.size() == 1);

  TrainOutcome train2 = cmd_train(config, gen.dataset_path);
  CHECK(train2.run_dir != train1.run_dir);  // rerun never lands on an existing run
  CHECK(read_text_file(train2.run_dir / "rows.json") ==
        read_text_file(train1.run_dir / "rows.json"));

  // ---- eval ----
  EvalOutcome eval = cmd_eval(config, gen.dataset_path, train1.run_dir);
  CHECK(fs::exists(eval.run_dir / "report.jsonl"));
  CHECK(fs::exists(eval.run_dir / "report.txt"));
  REQUIRE(eval.report.concepts.size() == 1);
  CHECK(eval.report.concepts[0].concept_name == "short-text");
  CHECK(std::isfinite(eval.report.concepts[0].gap_closed));
  CHECK(eval.report.concepts[0].training < eval.report.concepts[0].base);  // data is shorter
  REQUIRE(eval.report.subsets.size() == 1);
  CHECK(eval.report.subsets[0].name == "short-text");
  CHECK(eval.report.model_id == train1.record.run_id);
  EvaluationReport fromDisk = load_report(eval.run_dir / "report.jsonl");
  CHECK(fromDisk.concepts[0].candidate == eval.report.concepts[0].candidate);

  // ---- combined report ----
  std::string combined = cmd_report({eval.run_dir});
  CHECK(combined.find(eval.record.run_id) != std::string::npos);
  CHECK(combined.find("short-text") != std::string::npos);
  CHECK(code_of([] { cmd_report({}); }) == Errc::empty_set);

  // ---- tamper detection ----
  std::string rows_text = read_text_file(train1.run_dir / "rows.json");
  write_text_file(train1.run_dir / "rows.json", rows_text + " ");
  CHECK(code_of([&] { cmd_eval(config, gen.dataset_path, train1.run_dir); }) ==
        Errc::config_error);
}

TEST_CASE("explicit run ids refuse to overwrite unless resumed") {
  auto dir = neoword::testing::temp_dir("resume");
  ExperimentConfig config = ExperimentConfig::from_kv(small_experiment_kv(dir / "runs"));
  config.raw.set("train.steps", "2");
  config.train.steps = 2;

  DatagenResult gen = cmd_datagen(config, dir / "dataset.jsonl");
  TrainOutcome first = cmd_train(config, gen.dataset_path, "train-fixed");
  CHECK(first.run_dir.filename() == "train-fixed");
  CHECK(code_of([&] { cmd_train(config, gen.dataset_path, "train-fixed"); }) ==
        Errc::config_error);
  TrainOutcome again = cmd_train(config, gen.dataset_path, "train-fixed", true);
  CHECK(again.run_dir == first.run_dir);
}

TEST_CASE("plug-in evaluation writes one report per candidate") {
  auto dir = neoword::testing::temp_dir("plugin-cmd");
  ExperimentConfig config = ExperimentConfig::from_kv(small_experiment_kv(dir / "runs"));

  DatagenResult gen = cmd_datagen(config, dir / "dataset.jsonl");
  TrainOutcome train = cmd_train(config, gen.dataset_path);

  std::vector<PluginCandidate> candidates = {
      {PluginCandidate::Kind::synonym, "brief"},
      {PluginCandidate::Kind::instruction, "Give me a brief answer."}};
  PluginEvalOutcome plugin = cmd_plugin_eval(config, gen.dataset_path, train.run_dir, candidates);
  REQUIRE(plugin.reports.size() == 2);
  CHECK(plugin.record.command == "plugin-eval");
  CHECK(fs::exists(plugin.run_dir / "report-0.jsonl"));
  CHECK(fs::exists(plugin.run_dir / "report-1.jsonl"));
  CHECK(fs::exists(plugin.run_dir / "reports.txt"));
  CHECK(plugin.reports[0].condition != plugin.reports[1].condition);
  for (const auto& report : plugin.reports) {
    REQUIRE(report.concepts.size() == 1);
    CHECK(std::isfinite(report.concepts[0].gap_closed));
  }
  CHECK(code_of([&] { cmd_plugin_eval(config, gen.dataset_path, train.run_dir, {}); }) ==
        Errc::empty_set);

  std::string combined = cmd_report({plugin.run_dir});
  CHECK(combined.find("plugin-eval") != std::string::npos);
}

TEST_CASE("verbalization command records synonyms, transcripts, and synthesis") {
  auto dir = neoword::testing::temp_dir("verbalize-cmd");
  ExperimentConfig config = ExperimentConfig::from_kv(small_experiment_kv(dir / "runs"));

  DatagenResult gen = cmd_datagen(config, dir / "dataset.jsonl");
  TrainOutcome train = cmd_train(config, gen.dataset_path);

  // questionnaire questions are long; give the elicitation model more room
  ExperimentConfig wide = config;
  wide.model.context_len = 512;
  wide.model.pretrain_steps = 0;
  wide.max_new_tokens = 8;

  VerbalizeOutcome out = cmd_verbalize(wide, train.run_dir);
  CHECK(out.record.command == "verbalize");
  CHECK(out.verbalization.surface == "~brief");
  CHECK(out.verbalization.transcripts.size() == 24);
  CHECK_FALSE(out.verbalization.instruction.empty());
  CHECK(fs::exists(out.run_dir / "transcripts.jsonl"));
  CHECK(fs::exists(out.run_dir / "verbalization.json"));

  auto transcripts = load_transcripts(out.run_dir / "transcripts.jsonl");
  CHECK(transcripts.size() == 24);
  VerbalizationRecord loaded = load_verbalization(out.run_dir / "verbalization.json");
  CHECK(loaded.instruction == out.verbalization.instruction);
}
