// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "neoword/datagen.hpp"
#include "neoword/evaluation.hpp"
#include "neoword/lm/model.hpp"
#include "neoword/training.hpp"
#include "neoword/util.hpp"
#include "neoword/verbalization.hpp"
#include "neoword/vocab.hpp"

namespace neoword {

// ---- run persistence ----

struct ArtifactRef {
  std::string path;  // relative to the run directory
  std::string checksum;
};

struct RunRecord {
  std::string run_id;
  std::string command;
  std::string config_checksum;
  uint64_t seed = 0;
  std::string created_at;  // wall-clock stamp, informational only
  std::map<std::string, std::string> inputs;     // label -> content checksum
  std::map<std::string, ArtifactRef> artifacts;  // label -> file + checksum
  std::map<std::string, double> stats;           // final loss, row norms, ...
};

// dir/run.json
void save_run_record(const std::filesystem::path& dir, const RunRecord& record);
RunRecord load_run_record(const std::filesystem::path& dir);
// Recomputes every artifact checksum; ConfigError on any mismatch.
void verify_run_record(const std::filesystem::path& dir, const RunRecord& record);

// Content-derived id ("<command>-<hex12>"), suffixed -2, -3, ... until free
// under out_dir, so a rerun never lands on an existing run.
std::string derive_run_id(const std::string& command, const std::vector<std::string>& content_keys,
                          const std::filesystem::path& out_dir);

// ---- configuration ----

// File-first configuration ("key = value" lines); endpoints and credentials
// come from the environment, never from the file.
struct ExperimentConfig {
  KvConfig raw;

  std::string backend = "reference";  // reference | external
  ReferenceModelConfig model;
  std::string model_cache_dir;  // empty disables the binary model cache

  // synthetic pretraining corpus and instruction pools
  size_t corpus_docs = 256;
  uint64_t corpus_seed = 7;
  size_t train_instruction_count = 24;
  size_t eval_instruction_count = 12;

  // neologisms: a registry file, or one inline spec
  std::filesystem::path registry_path;
  std::string surface;
  std::string init_token;  // empty -> seeded random row
  uint64_t init_seed = 5;
  std::string concept_name;

  // datagen
  std::string teacher = "tiny";  // tiny | echo | http
  std::string datagen_mode = "simple";  // simple | multi
  std::string concept_prompt_name;  // catalog entry; overridden by the text form
  std::string concept_prompt_text;
  std::string datagen_template = "default";
  int repeats = 2;
  std::filesystem::path instructions_path;  // empty -> synthetic pool
  std::filesystem::path labeled_pairs_path;  // multi mode input
  std::string boost_concept;
  double boost_weight = 10.0;

  TrainConfig train;

  // evaluation
  std::vector<std::string> eval_concepts;  // gap rows
  std::vector<std::vector<std::string>> eval_subsets;  // goal rows
  std::map<std::string, ConceptSpec> custom_concepts;
  std::string eval_template = "default";
  std::filesystem::path eval_instructions_path;  // empty -> held-out pool
  size_t max_new_tokens = 48;
  uint64_t eval_seed = 0;
  std::string judge = "none";            // none | stub | http
  std::string summarizer = "stub";       // stub | http
  int synonym_count = 5;

  std::filesystem::path out_dir = "runs";

  static ExperimentConfig from_kv(const KvConfig& kv);
  // Parses the file, then applies "key=value" overrides in order.
  static ExperimentConfig load(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides = {});
  std::string checksum() const { return raw.checksum(); }
};

// "metric[:param][:higher|lower]" -> spec; understands word_count,
// sentence_count, digit_count, prevalence:<word>, shorter_than:<ratio>,
// more_likely:<nats_per_byte>, judged:<rubric>. ConfigError otherwise.
ConceptSpec concept_spec_from_string(const std::string& name, const std::string& text);

// Resolves against config-defined concepts first, then the built-in catalogs.
const ConceptSpec& resolve_concept(const ExperimentConfig& config, const std::string& name);

// Neologism specs for this config: registry file when set, else the inline
// surface. ConfigError when neither is given.
std::vector<NeologismSpec> config_neologisms(const ExperimentConfig& config);

// Pretrained reference model with the config's neologisms registered,
// rebuilt or loaded from the model cache. ConfigError for backend=external.
ModelHandle build_experiment_model(const ExperimentConfig& config);

// Text-level view of the configured backend with trained rows applied
// (reference) or a hosted model reached via the teacher endpoint (external).
std::unique_ptr<TextModel> make_text_model(const ExperimentConfig& config,
                                           const TrainResult* trained);

std::unique_ptr<TeacherClient> make_teacher(const ExperimentConfig& config);
std::unique_ptr<SummarizerClient> make_summarizer(const ExperimentConfig& config);

// ---- commands ----

struct DatagenResult {
  std::filesystem::path dataset_path;
  std::filesystem::path manifest_path;
  size_t records = 0;
};

// Writes the dataset and a manifest. On teacher failure the records produced
// so far are saved next to a manifest marked partial, then the error
// propagates.
DatagenResult cmd_datagen(const ExperimentConfig& config, const std::filesystem::path& out_path);

struct TrainOutcome {
  RunRecord record;
  std::filesystem::path run_dir;
  TrainResult result;
};

TrainOutcome cmd_train(const ExperimentConfig& config, const std::filesystem::path& dataset_path,
                       const std::string& run_id = "", bool resume = false);

struct EvalOutcome {
  RunRecord record;
  std::filesystem::path run_dir;
  EvaluationReport report;
};

// Evaluates the trained neologism condition: gap rows against (base greedy
// decodes, training targets) baselines, goal rows over the configured
// subsets.
EvalOutcome cmd_eval(const ExperimentConfig& config, const std::filesystem::path& dataset_path,
                     const std::filesystem::path& train_run_dir, const std::string& run_id = "",
                     bool resume = false);

struct VerbalizeOutcome {
  RunRecord record;
  std::filesystem::path run_dir;
  VerbalizationRecord verbalization;
};

VerbalizeOutcome cmd_verbalize(const ExperimentConfig& config,
                               const std::filesystem::path& train_run_dir,
                               const std::string& run_id = "", bool resume = false);

struct PluginEvalOutcome {
  RunRecord record;
  std::filesystem::path run_dir;
  std::vector<EvaluationReport> reports;  // one per candidate, in order
};

PluginEvalOutcome cmd_plugin_eval(const ExperimentConfig& config,
                                  const std::filesystem::path& dataset_path,
                                  const std::filesystem::path& train_run_dir,
                                  const std::vector<PluginCandidate>& candidates,
                                  const std::string& run_id = "", bool resume = false);

// Combined text tables over completed eval / plugin-eval runs; every run
// record's artifact checksums must validate (ConfigError otherwise).
std::string cmd_report(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace neoword
