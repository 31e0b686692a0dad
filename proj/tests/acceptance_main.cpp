// SPDX-License-Identifier: Apache-2.0
//
// Release gate. Runs the eleven release criteria in order and prints one
// PASS/FAIL line per criterion; exits nonzero when any fails. Tolerances are
// pinned here, next to the values they guard.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neoword/cli.hpp"
#include "neoword/datagen.hpp"
#include "neoword/errors.hpp"
#include "neoword/evaluation.hpp"
#include "neoword/lm/reference_model.hpp"
#include "neoword/lm/tiny_lang.hpp"
#include "neoword/metrics.hpp"
#include "neoword/training.hpp"
#include "neoword/util.hpp"
#include "neoword/verbalization.hpp"
#include "neoword/vocab.hpp"

using namespace neoword;
namespace fs = std::filesystem;

namespace {

fs::path fixture(const std::string& name) { return fs::path(NEOWORD_FIXTURE_DIR) / name; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// Collects failures; the first one becomes the printed detail.
struct Checker {
  size_t failed = 0;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failed;
    if (detail.empty()) detail = what;
  }
  void expect_near(double got, double want, double tol, const std::string& what) {
    expect(std::isfinite(got) && std::abs(got - want) <= tol,
           what + ": got " + fmt(got) + ", want " + fmt(want) + " within " + fmt(tol));
  }
};

struct CwdGuard {
  fs::path old = fs::current_path();
  ~CwdGuard() { fs::current_path(old); }
};

// Scratch area, recreated per run so content-derived run ids never collide
// with leftovers.
fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "neoword-acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// ---- shared desk-scale steering run (criterion 6 builds, criterion 9 reuses) ----

struct SteeringRun {
  ModelHandle base;
  ModelHandle tuned;
  std::vector<std::string> heldout;
  std::vector<std::string> references;  // base greedy decodes, one per instruction
  std::vector<PreferenceExample> short_data;
  double base_words = 0;
  double train_words = 0;
};

std::optional<SteeringRun> g_steering;

// ---- criterion 1: gap-closed percentages recomputed from recorded values ----

void criterion_gap_closed(Checker& c) {
  struct Row {
    const char* name;
    double candidate, base, training;
    double reported;  // published integer percentage
  };
  // (candidate, base, training) measurement triples and the integer
  // percentages they were reported as; recomputation must land within +/-1.
  const Row rows[] = {
      {"long", 1045.9, 778.0, 1511.7, 36},   {"short", 54.0, 787.1, 90.1, 105},
      {"single-sentence", 1.9, 42.9, 1.2, 98}, {"use-like", 9.3, 0.3, 9.0, 103},
      {"flattery", 8.7, 1.6, 8.5, 103},       {"refusal", 8.7, 1.3, 9.1, 95},
      {"wrong-answer", 7.8, 1.3, 7.6, 103},
  };
  for (const Row& r : rows) {
    double got = gap_closed_percent(r.candidate, r.base, r.training);
    c.expect_near(got, r.reported, 1.0, std::string("gap-closed ") + r.name);
  }
}

// ---- criterion 2: goal scores recomputed from their rate columns ----

void criterion_goal_scores(Checker& c) {
  struct Row {
    std::vector<double> rates;
    double reported;
  };
  // Every goal-score row of the concept-combination table: six single-concept
  // rows (identity), six pair rows, two all-three rows. Tolerance +/-0.001.
  const Row rows[] = {
      {{0.922}, 0.922},
      {{0.736}, 0.736},
      {{0.977}, 0.977},
      {{0.969}, 0.969},
      {{0.281}, 0.281},
      {{0.667}, 0.667},
      {{0.419, 0.891}, 0.570},
      {{0.395, 0.891}, 0.548},
      {{0.829, 0.605}, 0.699},
      {{0.659, 0.740}, 0.697},
      {{0.961, 0.109}, 0.195},
      {{0.767, 0.244}, 0.370},
      {{0.403, 0.868, 0.242}, 0.387},
      {{0.388, 0.465, 0.672}, 0.482},
  };
  for (const Row& r : rows) {
    std::string label = "goal score of {";
    for (double v : r.rates) label += fmt(v) + ",";
    label += "}";
    c.expect_near(goal_score(r.rates), r.reported, 1e-3, label);
  }
}

// ---- criterion 3: response-quality aggregation properties ----

void criterion_quality_aggregation(Checker& c) {
  c.expect(axbench_instance_score(0, 2, 2) == 0.0, "zero concept rating must force 0");
  c.expect(axbench_instance_score(2, 0, 2) == 0.0, "zero fluency rating must force 0");
  c.expect(axbench_instance_score(2, 2, 2) == 2.0, "equal ratings must pass through");
  c.expect(axbench_instance_score(1, 1, 1) == 1.0, "equal ratings must pass through");
  c.expect_near(axbench_instance_score(2, 2, 1), 1.5, 1e-12, "harmonic of (2,2,1)");
  c.expect_near(axbench_aggregate({{2, 2, 2}, {0, 1, 2}, {2, 2, 1}}), 3.5 / 3.0, 1e-12,
                "aggregate is the mean of per-instance scores");

  // Consistency check on the recorded overall 1.78: the harmonic mean of the
  // three column means (1.87, 1.98, 1.93) is 1.93, which exceeds it. The
  // overall therefore cannot be a harmonic-of-means; instances are scored
  // first and averaged after, which is how axbench_aggregate works.
  double hm_of_means = 3.0 / (1.0 / 1.87 + 1.0 / 1.98 + 1.0 / 1.93);
  c.expect_near(hm_of_means, 1.93, 5e-3, "harmonic of the column means");
  c.expect(hm_of_means > 1.78 + 0.1,
           "harmonic of means (" + fmt(hm_of_means) + ") must exceed the recorded overall 1.78");
}

// ---- criterion 4: analytic gradients against central finite differences ----

void criterion_gradients(Checker& c) {
  const auto& topics = tiny_lang::topic_words();
  const PromptTemplate& tmpl = find_template("default");
  const double h = 1e-5;
  const double tol = 1e-4;
  double worst = 0.0;
  size_t configs = 0;

  for (size_t i = 0; i < 104; ++i) {
    ReferenceModelConfig mc;
    mc.d = static_cast<int>(8 * (1 + i % 4));  // 8, 16, 24, 32
    mc.layers = 1 + static_cast<int>(i % 2);
    mc.heads = (i % 3 == 0) ? 4 : 2;
    mc.ff_mult = 2;
    mc.context_len = 64;
    mc.seed = 9000 + i;
    mc.pretrain_steps = 0;

    InitSource init =
        (i % 5 == 0) ? InitSource::from_token(" a") : InitSource::from_seed(100 + i);
    auto vocab = std::make_shared<ExpandedVocabulary>(
        expand_vocabulary(tiny_lang::base_vocabulary(), {{"~g", init, "c"}}));
    ModelHandle base = build_reference_model(mc, vocab, {}, tiny_lang::markers());
    const size_t row = vocab->base_size();

    PreferenceExample ex;
    ex.id = "g" + std::to_string(i);
    ex.instruction = render_template(
        tmpl, tiny_lang::instruction({topics[i % 24], topics[(i + 1 + i / 24) % 24]}), {"~g"});
    ex.chosen = topics[i % 24] + ".";
    ex.rejected = " the" + topics[(i + 5) % 24] + " is" + topics[(i + 9) % 24] + ".";
    ex.template_id = tmpl.id;
    ex.concepts = {"c"};

    // Half the runs move theta off theta_0 so the reference terms matter.
    ModelHandle model = base;
    if (i % 2 == 1) {
      Vector moved = base.embeddings().row(row).transpose() * 1.5;
      moved(0) += 0.01;
      model = base.with_rows({{row, moved}});
    }

    LossKind kind = (i % 3 == 0) ? LossKind::nll : LossKind::apo_up;
    ApoSign sign = (i % 6 < 3) ? ApoSign::as_printed : ApoSign::standard_dpo;
    double beta = 0.05 + 0.004 * static_cast<double>(i);
    PreferenceLoss loss(model, base, ex, kind, beta, sign);

    Vector analytic = loss_gradient_new_rows(model, loss, {row}).at(row);
    for (int col = 0; col < mc.d; ++col) {
      Matrix up = model.embeddings();
      up(static_cast<Eigen::Index>(row), col) += h;
      Matrix down = model.embeddings();
      down(static_cast<Eigen::Index>(row), col) -= h;
      double fd = (loss.value(up) - loss.value(down)) / (2 * h);
      double rel = std::abs(analytic(col) - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
      c.expect(rel <= tol, "preference gradient config " + std::to_string(i) + " col " +
                               std::to_string(col) + ": rel err " + fmt(rel));
    }
    ++configs;
  }

  // Norm-hinge gradients, away from the kink on both sides.
  for (size_t i = 0; i < 16; ++i) {
    ReferenceModelConfig mc;
    mc.d = static_cast<int>(8 * (1 + i % 4));
    mc.layers = 1;
    mc.heads = 2;
    mc.ff_mult = 2;
    mc.context_len = 64;
    mc.seed = 77 + i;
    auto vocab = std::make_shared<ExpandedVocabulary>(expand_vocabulary(
        tiny_lang::base_vocabulary(), {{"~g", InitSource::from_seed(40 + i), "c"}}));
    ModelHandle base = build_reference_model(mc, vocab, {}, tiny_lang::markers());
    const size_t row = vocab->base_size();

    double target_norm = (i % 2 == 0) ? 1.4 + 0.1 * static_cast<double>(i) : 0.5;
    Vector scaled = base.embeddings().row(row).transpose();
    scaled *= target_norm / scaled.norm();
    ModelHandle model = base.with_rows({{row, scaled}});
    HingeLoss loss({row}, 0.1);

    Vector analytic = loss_gradient_new_rows(model, loss, {row}).at(row);
    for (int col = 0; col < mc.d; ++col) {
      Matrix up = model.embeddings();
      up(static_cast<Eigen::Index>(row), col) += h;
      Matrix down = model.embeddings();
      down(static_cast<Eigen::Index>(row), col) -= h;
      double fd = (loss.value(up) - loss.value(down)) / (2 * h);
      double rel = std::abs(analytic(col) - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
      c.expect(rel <= tol, "hinge gradient config " + std::to_string(i) + " col " +
                               std::to_string(col) + ": rel err " + fmt(rel));
    }
    ++configs;
  }

  c.expect(configs >= 100, "need at least 100 configurations, ran " + std::to_string(configs));
  if (c.failed == 0)
    c.detail = std::to_string(configs) + " configs, max rel err " + fmt(worst);
}

// ---- criterion 5: frozen-base equivalence after a real training run ----

void criterion_frozen_base(Checker& c) {
  ReferenceModelConfig mc;
  mc.d = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.ff_mult = 2;
  mc.context_len = 64;
  mc.seed = 9;
  mc.pretrain_steps = 60;
  mc.pretrain_batch = 8;
  mc.pretrain_lr = 3e-3;

  auto vocab = std::make_shared<ExpandedVocabulary>(expand_vocabulary(
      tiny_lang::base_vocabulary(), {{"~x", InitSource::from_seed(6), "short-text"}}));
  tiny_lang::CorpusConfig cc;
  cc.seed = 2;
  cc.docs = 96;
  auto corpus = tiny_lang::encode_corpus(tiny_lang::build_corpus(cc), vocab->base());
  ModelHandle base = build_reference_model(mc, vocab, corpus, tiny_lang::markers());

  TinyTeacher teacher;
  const PromptTemplate& tmpl = find_template("default");
  std::vector<PreferenceExample> dataset;
  for (const auto& rec : generate_concept_data(teacher, tiny_lang::train_instructions(4, 2),
                                               concept_prompt("short-text"), 1))
    dataset.push_back(build_preference_example(rec.instruction, rec.concept_response,
                                               rec.default_response, tmpl, {"~x"},
                                               {"short-text"}));
  TrainConfig tc;
  tc.loss = LossKind::nll;
  tc.steps = 30;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  ModelHandle tuned = apply_train_result(base, train_neologisms(base, dataset, tc));

  c.expect(base.frozen_checksum() == tuned.frozen_checksum(),
           "frozen-parameter checksum changed under training");
  c.expect(base.parameter_checksum() != tuned.parameter_checksum(),
           "training left every parameter untouched");

  // 120 distinct prompts, none containing a neologism surface.
  const auto& topics = tiny_lang::topic_words();
  const char* suffixes[] = {"", " Give me a brief answer.", " yes no"};
  size_t prompts = 0;
  double worst = 0.0;
  for (size_t i = 0; i < 120; ++i) {
    std::string text =
        tiny_lang::instruction({topics[i % 24], topics[(i % 24 + 1 + i / 24) % 24]}) +
        suffixes[i % 3];
    c.expect(text.find('~') == std::string::npos, "prompt accidentally names a neologism");
    std::vector<size_t> ids = base.encode_text(base.chat_prompt(text));
    for (size_t id : ids)
      c.expect(id < vocab->base_size(), "neologism id leaked into a plain prompt");
    Vector lb = next_token_logits(base, ids);
    Vector lt = next_token_logits(tuned, ids);
    double diff = (lb - lt).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    c.expect(diff == 0.0, "prompt " + std::to_string(i) + ": max |delta logit| = " + fmt(diff));
    ++prompts;
  }
  c.expect(prompts >= 100, "need at least 100 prompts");
  if (c.failed == 0)
    c.detail = std::to_string(prompts) + " prompts, max |delta logit| = " + fmt(worst);
}

// ---- criterion 6: desk-scale steering on the reference model ----

void criterion_steering(Checker& c) {
  ReferenceModelConfig mc;
  mc.d = 32;
  mc.layers = 2;
  mc.heads = 2;
  mc.ff_mult = 4;
  mc.context_len = 96;
  mc.seed = 1;
  mc.pretrain_steps = 400;
  mc.pretrain_batch = 16;
  mc.pretrain_lr = 3e-3;

  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(tiny_lang::base_vocabulary(),
                        {{"~short", InitSource::from_seed(11), "short-text"},
                         {"~zappy", InitSource::from_seed(12), "zappy-symbol"}}));
  tiny_lang::CorpusConfig cc;
  cc.seed = 1;
  cc.docs = 2000;
  auto corpus = tiny_lang::encode_corpus(tiny_lang::build_corpus(cc), vocab->base());
  ModelHandle base = build_reference_model(mc, vocab, corpus, tiny_lang::markers());

  TinyTeacher teacher;
  const PromptTemplate& tmpl = find_template("default");
  auto instructions = tiny_lang::train_instructions(24, 1);

  auto make_dataset = [&](const std::string& prompt, const std::string& surface,
                          const std::string& concept_name) {
    std::vector<PreferenceExample> out;
    for (const auto& rec : generate_concept_data(teacher, instructions, prompt, 2))
      out.push_back(build_preference_example(rec.instruction, rec.concept_response,
                                             rec.default_response, tmpl, {surface},
                                             {concept_name}));
    return out;
  };
  auto short_data = make_dataset(concept_prompt("short-text"), "~short", "short-text");
  auto zappy_data = make_dataset("Give me a zappy answer.", "~zappy", "zappy-symbol");

  TrainConfig tc;
  tc.loss = LossKind::nll;
  tc.steps = 200;
  tc.learning_rate = 1e-2;
  tc.batch_size = 8;
  ModelHandle m1 = apply_train_result(base, train_neologisms(base, short_data, tc));
  ModelHandle m2 = apply_train_result(m1, train_neologisms(m1, zappy_data, tc));

  auto heldout = tiny_lang::heldout_instructions(12, 1);
  DecodeConfig dec = DecodeConfig::greedy_tokens(40);
  std::vector<std::string> references, short_resps, zappy_resps;
  for (const auto& instr : heldout) {
    references.push_back(respond(base, instr, dec));
    short_resps.push_back(respond(m2, render_template(tmpl, instr, {"~short"}), dec));
    zappy_resps.push_back(respond(m2, render_template(tmpl, instr, {"~zappy"}), dec));
  }

  ConceptSpec words = ConceptSpec::counted("short-text", MetricKind::word_count,
                                           Direction::lower);
  ConceptSpec zap = ConceptSpec::prevalence_of("zappy-symbol", "zap", Direction::higher);

  auto chosen_of = [](const std::vector<PreferenceExample>& data) {
    std::vector<std::string> out;
    for (const auto& ex : data) out.push_back(ex.chosen);
    return out;
  };

  double base_words = mean_concept_score(references, words);
  double train_words = mean_concept_score(chosen_of(short_data), words);
  double cand_words = mean_concept_score(short_resps, words);
  double word_gap = gap_closed_percent(cand_words, base_words, train_words);
  c.expect(word_gap >= 80.0, "short-response gap closed " + fmt(word_gap) + "% < 80%");

  double base_zap = mean_concept_score(references, zap);
  double train_zap = mean_concept_score(chosen_of(zappy_data), zap);
  double cand_zap = mean_concept_score(zappy_resps, zap);
  double zap_gap = gap_closed_percent(cand_zap, base_zap, train_zap);
  c.expect(zap_gap >= 50.0, "zap-prevalence gap closed " + fmt(zap_gap) + "% < 50%");

  if (c.failed == 0) {
    c.detail = "word gap " + fmt(word_gap) + "%, zap gap " + fmt(zap_gap) + "%";
    g_steering = SteeringRun{base,       m2,         heldout, references,
                             short_data, base_words, train_words};
  }
}

// ---- criterion 7: closed-form loss values ----

void criterion_closed_forms(Checker& c) {
  const double ln2 = 0.6931471805599453;

  // Scalar worked example: beta 0.1, both likelihood margins 2 nats.
  // High-precision oracle values for the two sign conventions.
  double as_printed = stable_softplus(-(0.1 * 2 + 0.1 * 2)) + stable_softplus(0.0);
  double standard = stable_softplus(-(0.1 * 2 - 0.1 * 2)) + stable_softplus(0.0);
  c.expect_near(as_printed, 1.2061624329598979, 1e-12, "worked example, as printed");
  c.expect_near(as_printed, 1.2061, 1e-4, "worked example vs its 4-decimal rendering");
  c.expect_near(standard, 1.3862943611198906, 1e-12, "worked example, standard variant");
  c.expect_near(standard, 1.3863, 1e-4, "worked example vs its 4-decimal rendering");
  c.expect(standard == 2 * ln2, "margin-cancelling variant must be exactly 2 ln 2");

  // At theta = theta_0 the absolute-likelihood term is exactly ln 2.
  ReferenceModelConfig mc;
  mc.d = 8;
  mc.layers = 1;
  mc.heads = 2;
  mc.ff_mult = 2;
  mc.context_len = 64;
  mc.seed = 5;
  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(tiny_lang::base_vocabulary(), {{"~x", InitSource::from_seed(3), "c"}}));
  ModelHandle model = build_reference_model(mc, vocab, {}, tiny_lang::markers());

  PreferenceExample ex;
  ex.id = "cf";
  ex.instruction = render_template(find_template("default"),
                                   tiny_lang::instruction({" bazo"}), {"~x"});
  ex.chosen = " bazo.";
  ex.rejected = " the bazo is dazo.";
  ex.template_id = "default";
  ex.concepts = {"c"};

  EncodedExample ids = encode_example(model, ex);
  double lpc = sequence_logprob(model, ids.prompt_ids, ids.chosen_ids).first;
  double lpr = sequence_logprob(model, ids.prompt_ids, ids.rejected_ids).first;

  double beta = 0.1;
  double loss_ap = apo_up_loss(model, model, ex, beta, ApoSign::as_printed);
  c.expect_near(loss_ap - stable_softplus(-2 * beta * (lpc - lpr)), ln2, 1e-12,
                "absolute-likelihood term at theta = theta_0");
  double loss_std = apo_up_loss(model, model, ex, beta, ApoSign::standard_dpo);
  c.expect_near(loss_std, 2 * ln2, 1e-15, "standard variant at theta = theta_0");
}

// ---- criterion 8: template and teaching-prompt goldens ----

void criterion_goldens(Checker& c) {
  const std::string instruction = "What is a tomato?";
  auto table_of = [&](const std::string& name) -> const std::vector<PromptTemplate>& {
    if (name == "train") return train_templates();
    if (name == "eval") return eval_templates();
    return two_concept_templates();
  };

  std::map<std::string, std::set<std::string>> seen;
  auto lines = split(read_text_file(fixture("template_goldens.txt")), '\n');
  size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    c.expect(starts_with(lines[i], ">>> "), "golden block must open with '>>> ': " + lines[i]);
    if (!starts_with(lines[i], ">>> ")) return;
    std::string head = lines[i].substr(4);
    size_t sp = head.find(' ');
    std::string table = head.substr(0, sp);
    std::string id = head.substr(sp + 1);
    ++i;
    std::vector<std::string> body;
    while (i < lines.size() && lines[i] != "<<<") body.push_back(lines[i++]);
    c.expect(i < lines.size(), "unterminated golden block " + id);
    ++i;

    const auto& templates = table_of(table);
    auto it = std::find_if(templates.begin(), templates.end(),
                           [&](const PromptTemplate& t) { return t.id == id; });
    c.expect(it != templates.end(), "golden names unknown template " + table + "/" + id);
    if (it == templates.end()) continue;
    std::vector<std::string> surfaces =
        it->slot_count == 2 ? std::vector<std::string>{"~wrong", "~big"}
                            : std::vector<std::string>{"~wrong"};
    std::string rendered = render_template(*it, instruction, surfaces);
    c.expect(rendered == join(body, "\n"),
             "render of " + table + "/" + id + " differs from its golden");
    seen[table].insert(id);
  }

  // Every builtin template must be covered by a golden block.
  for (const char* name : {"train", "eval", "two"})
    c.expect(seen[name].size() == table_of(name).size(),
             std::string("golden coverage incomplete for the ") + name + " table");

  // Negative templates swap chosen and rejected; positives keep them.
  for (const auto* table : {&train_templates(), &eval_templates()}) {
    for (const PromptTemplate& t : *table) {
      PreferenceExample ex = build_preference_example("Q?", "concept reply", "default reply", t,
                                                      {"~w"}, {"c"});
      if (t.polarity == Polarity::negative) {
        c.expect(ex.chosen == "default reply" && ex.rejected == "concept reply",
                 "negative template " + t.id + " must swap the pair");
      } else {
        c.expect(ex.chosen == "concept reply" && ex.rejected == "default reply",
                 "positive template " + t.id + " must keep the pair");
      }
    }
  }

  // The in-context teaching prompt, byte-for-byte, separators included.
  std::vector<IclExample> examples = {
      {"What is a tomato?", "A fruit.", "A vegetable."},
      {"Name a color.", "Red.", "Loud."},
  };
  std::string icl = build_icl_prompt(examples, "~foo");
  std::string golden = read_text_file(fixture("icl_golden.txt"));
  c.expect(icl == golden, "teaching prompt differs from its golden");
  c.expect(icl.find("========") != std::string::npos, "teaching prompt lost its separators");
}

// ---- criterion 9: plug-in surface substitution identity ----

void criterion_plugin_identity(Checker& c) {
  c.expect(g_steering.has_value(), "steering run unavailable (criterion 6 failed)");
  if (!g_steering) return;
  const SteeringRun& run = *g_steering;
  const PromptTemplate& tmpl = find_template("default");

  Condition neolog = template_condition("neologism:~short", tmpl, {"~short"});
  Condition plugin = plugin_condition({PluginCandidate::Kind::synonym, "~short"}, tmpl);
  for (const auto& instr : run.heldout)
    c.expect(neolog.build_prompt(instr) == plugin.build_prompt(instr),
             "plug-in prompt differs from the neologism prompt for: " + instr);

  EvalPlan plan;
  plan.instructions = run.heldout;
  plan.gap_concepts = {
      ConceptSpec::counted("short-text", MetricKind::word_count, Direction::lower)};
  plan.baselines["short-text"] = {run.base_words, run.train_words};
  plan.subset_lexicon = plan.gap_concepts;
  plan.subsets.push_back({"short-text", {"short-text"},
                          template_condition("neologism:~short", tmpl, {"~short"})});
  plan.references = run.references;

  EvalOptions options;
  options.decode = DecodeConfig::greedy_tokens(40);
  options.model_id = "steering-run";

  ReferenceTextModel tuned(run.tuned, "tuned");
  EvaluationReport direct = evaluate_condition(tuned, neolog, plan, options);
  auto reports = plugin_eval(tuned, {{PluginCandidate::Kind::synonym, "~short"}}, tmpl, plan,
                             options);
  c.expect(reports.size() == 1, "one candidate must yield one report");
  if (reports.size() != 1) return;
  const EvaluationReport& via_plugin = reports[0];

  c.expect(via_plugin.concepts.size() == direct.concepts.size() && direct.concepts.size() == 1,
           "reports must carry the same single gap row");
  if (via_plugin.concepts.size() == 1 && direct.concepts.size() == 1) {
    c.expect(via_plugin.concepts[0].candidate == direct.concepts[0].candidate,
             "candidate score must match exactly");
    c.expect(via_plugin.concepts[0].gap_closed == direct.concepts[0].gap_closed,
             "gap-closed must match exactly");
  }
  c.expect(via_plugin.subsets.size() == 1 && direct.subsets.size() == 1 &&
               via_plugin.subsets[0].rates == direct.subsets[0].rates &&
               via_plugin.subsets[0].goal == direct.subsets[0].goal,
           "subset rates must match exactly");
}

// ---- criterion 10: multi-concept subset closure and boosting ----

void criterion_multiconcept(Checker& c) {
  std::vector<LabeledPair> pairs = {
      {"Q1?", "4", "a very long answer with words", {"numerical", "short"}},
      {"Q2?", "short one", "a longer reference answer", {"short"}},
      {"Q3?", "maybe", "reference text", {"likely"}},
      {"Q4?", "1 2 3 likely", "reference words", {"likely", "numerical"}},
      {"Q5?", "ignored", "ignored too", {}},
      {"Q6?", "tri", "reference", {"likely", "numerical", "short"}},
  };
  MultiConceptOptions options = MultiConceptOptions::with_default_template(
      {{"short", "~s"}, {"numerical", "~n"}, {"likely", "~l"}});
  options.boosted_concept = "likely";
  options.boost_weight = 10.0;

  auto dataset = build_multiconcept_dataset(pairs, options);
  c.expect(dataset.size() == 15, "expected 15 examples (3+1+1+3+0+7), got " +
                                     std::to_string(dataset.size()));

  // Group emitted concept subsets by source pair.
  std::map<std::string, std::set<std::vector<std::string>>> by_pair;
  for (const auto& ex : dataset) {
    c.expect(!ex.concepts.empty(), "example with an empty concept subset");
    c.expect(starts_with(ex.id, "mc-"), "multi-concept id must carry its pair: " + ex.id);
    std::string pair_key = ex.id.substr(0, ex.id.find('-', 3));
    by_pair[pair_key].insert(ex.concepts);
    double want = (ex.concepts == std::vector<std::string>{"likely"}) ? 10.0 : 1.0;
    c.expect(ex.weight == want, "example " + ex.id + " has weight " + fmt(ex.weight) +
                                    ", want " + fmt(want));
  }

  // Closure: every non-empty sub-subset of an emitted subset is also emitted
  // for the same pair.
  for (const auto& [pair_key, subsets] : by_pair) {
    for (const auto& subset : subsets) {
      size_t n = subset.size();
      for (size_t mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<std::string> sub;
        for (size_t b = 0; b < n; ++b)
          if (mask & (1u << b)) sub.push_back(subset[b]);
        c.expect(subsets.count(sub) == 1,
                 pair_key + ": emitted subset of size " + std::to_string(n) +
                     " is missing sub-subset " + join(sub, "+"));
      }
    }
  }
}

// ---- criterion 11: end-to-end pipeline determinism ----

KvConfig pipeline_kv() {
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
  kv.set("out.dir", "runs");
  return kv;
}

void criterion_determinism(Checker& c) {
  struct RunFiles {
    std::string dataset, manifest, rows, report, report_text;
    std::string train_id, eval_id;
  };
  auto run_pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir);
    CwdGuard guard;
    fs::current_path(dir);
    ExperimentConfig config = ExperimentConfig::from_kv(pipeline_kv());
    DatagenResult gen = cmd_datagen(config, "dataset.jsonl");
    TrainOutcome train = cmd_train(config, gen.dataset_path);
    EvalOutcome eval = cmd_eval(config, gen.dataset_path, train.run_dir);
    RunFiles f;
    f.dataset = read_text_file(gen.dataset_path);
    f.manifest = read_text_file(gen.manifest_path);
    f.rows = read_text_file(train.run_dir / "rows.json");
    f.report = read_text_file(eval.run_dir / "report.jsonl");
    f.report_text = read_text_file(eval.run_dir / "report.txt");
    f.train_id = train.record.run_id;
    f.eval_id = eval.record.run_id;
    return f;
  };

  RunFiles a = run_pipeline(scratch_root() / "e2e-a");
  RunFiles b = run_pipeline(scratch_root() / "e2e-b");
  c.expect(a.train_id == b.train_id, "train run ids diverged");
  c.expect(a.eval_id == b.eval_id, "eval run ids diverged");
  c.expect(a.dataset == b.dataset, "datasets are not byte-identical");
  c.expect(a.manifest == b.manifest, "manifests are not byte-identical");
  c.expect(a.rows == b.rows, "trained rows are not byte-identical");
  c.expect(a.report == b.report, "reports are not byte-identical");
  c.expect(a.report_text == b.report_text, "report tables are not byte-identical");
}

struct Criterion {
  int number;
  std::string title;
  std::function<void(Checker&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gap-closed percentages recompute from their measurements", criterion_gap_closed},
      {2, "goal scores recompute from their rate columns", criterion_goal_scores},
      {3, "response-quality aggregation properties", criterion_quality_aggregation},
      {4, "loss gradients match central finite differences", criterion_gradients},
      {5, "frozen-base equivalence after training", criterion_frozen_base},
      {6, "desk-scale steering closes the concept gaps", criterion_steering},
      {7, "closed-form loss values", criterion_closed_forms},
      {8, "template and teaching-prompt goldens", criterion_goldens},
      {9, "plug-in surface substitution identity", criterion_plugin_identity},
      {10, "multi-concept subset closure and boosting", criterion_multiconcept},
      {11, "end-to-end pipeline determinism", criterion_determinism},
  };

  scratch_root();
  size_t failures = 0;
  for (const Criterion& criterion : criteria) {
    Checker checker;
    auto start = std::chrono::steady_clock::now();
    try {
      criterion.run(checker);
    } catch (const std::exception& e) {
      checker.expect(false, std::string("unhandled exception: ") + e.what());
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[512];
    if (checker.failed == 0) {
      std::snprintf(line, sizeof(line), "PASS  %2d  %s (%.1fs)%s%s", criterion.number,
                    criterion.title.c_str(), secs,
                    checker.detail.empty() ? "" : " -- ", checker.detail.c_str());
    } else {
      ++failures;
      std::snprintf(line, sizeof(line), "FAIL  %2d  %s (%.1fs) -- %zu check(s): %s",
                    criterion.number, criterion.title.c_str(), secs, checker.failed,
                    checker.detail.c_str());
    }
    std::cout << line << std::endl;
  }

  if (failures == 0) {
    std::cout << "all 11 criteria passed" << std::endl;
    return 0;
  }
  std::cout << failures << " criteria failed" << std::endl;
  return 1;
}
