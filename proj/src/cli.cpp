// SPDX-License-Identifier: Apache-2.0
#include "neoword/cli.hpp"

#include <chrono>
#include <ctime>
#include <utility>

#include <nlohmann/json.hpp>

#include "neoword/clients_http.hpp"
#include "neoword/errors.hpp"
#include "neoword/lm/reference_model.hpp"
#include "neoword/lm/tiny_lang.hpp"

namespace fs = std::filesystem;

namespace neoword {

namespace {

std::string timestamp_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    std::string line = trim(raw);
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

// Claims (or under resume, reuses) a run directory.
void prepare_run_dir(const fs::path& dir, bool explicit_id, bool resume) {
  if (fs::exists(dir)) {
    if (explicit_id && !resume)
      fail(Errc::config_error,
           "run directory " + dir.string() + " already exists; pass --resume to reuse it");
  }
  fs::create_directories(dir);
}

void require_one_of(const std::string& key, const std::string& value,
                    const std::vector<std::string>& allowed) {
  for (const auto& a : allowed)
    if (value == a) return;
  fail(Errc::config_error, key + " must be one of " + join(allowed, "|") + ", got '" + value + "'");
}

// Keys consumed directly by ExperimentConfig::from_kv. train.* and
// eval.custom.* are checked as prefixes.
const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "backend",
      "model.d",
      "model.layers",
      "model.heads",
      "model.ff_mult",
      "model.context_len",
      "model.seed",
      "model.pretrain_steps",
      "model.pretrain_batch",
      "model.pretrain_lr",
      "model.cache_dir",
      "corpus.docs",
      "corpus.seed",
      "corpus.train_instructions",
      "corpus.eval_instructions",
      "registry",
      "neologism.surface",
      "neologism.init",
      "neologism.init_seed",
      "neologism.concept",
      "datagen.teacher",
      "datagen.mode",
      "datagen.concept_prompt",
      "datagen.concept_prompt_text",
      "datagen.template",
      "datagen.repeats",
      "datagen.instructions",
      "datagen.labeled_pairs",
      "datagen.boost_concept",
      "datagen.boost_weight",
      "eval.concepts",
      "eval.subsets",
      "eval.template",
      "eval.instructions",
      "eval.max_new_tokens",
      "eval.seed",
      "eval.judge",
      "eval.judge_fallback",
      "eval.summarizer",
      "eval.synonyms",
      "out.dir",
  };
  return keys;
}

nlohmann::json record_to_json(const RunRecord& rec) {
  nlohmann::json j{{"run_id", rec.run_id},
                   {"command", rec.command},
                   {"config_checksum", rec.config_checksum},
                   {"seed", rec.seed},
                   {"created_at", rec.created_at},
                   {"inputs", rec.inputs},
                   {"stats", rec.stats}};
  j["artifacts"] = nlohmann::json::object();
  for (const auto& [label, ref] : rec.artifacts)
    j["artifacts"][label] = {{"path", ref.path}, {"checksum", ref.checksum}};
  return j;
}

// Shared evaluation state: the plan plus everything the options point into.
struct EvalSetup {
  std::unique_ptr<ReferenceTextModel> base_text;
  std::unique_ptr<ReferenceTextModel> candidate_text;
  std::unique_ptr<JudgeClient> judge;
  RubricRegistry rubrics = RubricRegistry::builtin();
  PromptTemplate tmpl;
  std::string primary_surface;
  EvalPlan plan;
  EvalOptions options;
};

std::unique_ptr<JudgeClient> make_judge(const ExperimentConfig& config) {
  if (config.judge == "none") return nullptr;
  if (config.judge == "stub") {
    double fallback = config.raw.get_double("eval.judge_fallback", 1.0);
    return std::make_unique<StubJudge>(std::vector<std::pair<std::string, double>>{}, fallback);
  }
  auto endpoint = judge_endpoint_from_env();
  if (!endpoint)
    fail(Errc::config_error, "eval.judge = http needs NEOWORD_JUDGE_ENDPOINT in the environment");
  return std::make_unique<HttpJudge>(*endpoint);
}

std::string primary_surface(const ExperimentConfig& config) {
  return config_neologisms(config).front().surface;
}

std::string surface_for_concept(const ExperimentConfig& config, const std::string& concept_name) {
  for (const auto& spec : config_neologisms(config))
    if (spec.concept_name == concept_name) return spec.surface;
  fail(Errc::config_error, "no registered neologism is trained for concept '" + concept_name + "'");
}

std::vector<std::string> eval_instruction_pool(const ExperimentConfig& config) {
  if (!config.eval_instructions_path.empty()) return read_lines(config.eval_instructions_path);
  return tiny_lang::heldout_instructions(config.eval_instruction_count, config.corpus_seed);
}

// Builds models, decodes references, and assembles the plan shared by
// cmd_eval and cmd_plugin_eval.
EvalSetup build_eval_setup(const ExperimentConfig& config,
                           const std::vector<PreferenceExample>& dataset,
                           const TrainResult& trained, const std::string& train_run_id) {
  if (config.backend != "reference")
    fail(Errc::config_error, "evaluation against trained rows needs the reference backend");

  EvalSetup setup;
  ModelHandle base = build_experiment_model(config);
  ModelHandle tuned = apply_train_result(base, trained);
  setup.base_text = std::make_unique<ReferenceTextModel>(base, "reference-base");
  setup.candidate_text = std::make_unique<ReferenceTextModel>(tuned, "reference-trained");
  setup.judge = make_judge(config);
  setup.tmpl = find_template(config.eval_template);
  setup.primary_surface = primary_surface(config);

  DecodeConfig decode = DecodeConfig::greedy_tokens(config.max_new_tokens);
  decode.seed = config.eval_seed;

  setup.plan.instructions = eval_instruction_pool(config);
  setup.plan.references.reserve(setup.plan.instructions.size());
  for (const auto& instruction : setup.plan.instructions)
    setup.plan.references.push_back(setup.base_text->respond(instruction, decode));

  std::vector<std::string> targets;
  targets.reserve(dataset.size());
  for (const auto& ex : dataset) targets.push_back(ex.chosen);

  for (const auto& name : config.eval_concepts) {
    const ConceptSpec& spec = resolve_concept(config, name);
    setup.plan.gap_concepts.push_back(spec);
    ConceptBaselines b;
    b.base = mean_concept_score(setup.plan.references, spec, setup.judge.get(), &setup.rubrics);
    b.training = mean_concept_score(targets, spec, setup.judge.get(), &setup.rubrics);
    setup.plan.baselines[spec.name] = b;
  }

  for (const auto& subset : config.eval_subsets) {
    SubsetCondition sc;
    sc.name = join(subset, "+");
    sc.concepts = subset;
    std::vector<std::string> surfaces;
    for (const auto& concept_name : subset) {
      const ConceptSpec& spec = resolve_concept(config, concept_name);
      bool seen = false;
      for (const auto& have : setup.plan.subset_lexicon) seen = seen || have.name == spec.name;
      if (!seen) setup.plan.subset_lexicon.push_back(spec);
      surfaces.push_back(surface_for_concept(config, concept_name));
    }
    sc.condition = template_condition(sc.name, setup.tmpl, {join(surfaces, ", ")});
    setup.plan.subsets.push_back(std::move(sc));
  }

  setup.options.decode = decode;
  setup.options.judge = setup.judge.get();
  setup.options.rubrics = &setup.rubrics;
  const TextModel* scorer = setup.base_text.get();
  setup.options.likelihood_for = [scorer](const std::string& instruction) -> LikelihoodFn {
    return [scorer, instruction](const std::string& response) {
      return scorer->response_logprob(instruction, response);
    };
  };
  setup.options.model_id = train_run_id;
  setup.options.config_checksum = config.checksum();
  setup.options.seed = config.eval_seed;
  return setup;
}

// Loads and validates the train run this command builds on.
std::pair<RunRecord, TrainResult> load_train_run(const fs::path& train_run_dir) {
  RunRecord rec = load_run_record(train_run_dir);
  verify_run_record(train_run_dir, rec);
  auto it = rec.artifacts.find("rows");
  if (it == rec.artifacts.end())
    fail(Errc::config_error, "run " + rec.run_id + " has no trained-rows artifact");
  return {rec, load_train_result(train_run_dir / it->second.path)};
}

std::vector<LabeledPair> load_labeled_pairs(const fs::path& path) {
  std::vector<LabeledPair> pairs;
  size_t line_no = 0;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    ++line_no;
    if (trim(raw).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(raw);
      LabeledPair p;
      p.instruction = j.at("instruction").get<std::string>();
      p.concept_response = j.at("concept_response").get<std::string>();
      p.reference_response = j.at("reference_response").get<std::string>();
      p.labels = j.at("labels").get<std::vector<std::string>>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error,
           path.string() + ":" + std::to_string(line_no) + ": bad labeled pair: " + e.what());
    }
  }
  return pairs;
}

void write_manifest(const fs::path& manifest_path, const fs::path& dataset_path,
                    const std::vector<PreferenceExample>& dataset, const ExperimentConfig& config,
                    const std::string& producer, const std::string& status) {
  nlohmann::json j{{"dataset", dataset_path.string()},
                   {"records", dataset.size()},
                   {"checksum", dataset_checksum(dataset)},
                   {"config_checksum", config.checksum()},
                   {"producer", producer},
                   {"status", status}};
  write_text_file(manifest_path, j.dump(2) + "\n");
}

}  // namespace

// ---- run persistence ----

void save_run_record(const fs::path& dir, const RunRecord& record) {
  write_text_file(dir / "run.json", record_to_json(record).dump(2) + "\n");
}

RunRecord load_run_record(const fs::path& dir) {
  RunRecord rec;
  try {
    nlohmann::json j = nlohmann::json::parse(read_text_file(dir / "run.json"));
    rec.run_id = j.at("run_id").get<std::string>();
    rec.command = j.at("command").get<std::string>();
    rec.config_checksum = j.at("config_checksum").get<std::string>();
    rec.seed = j.at("seed").get<uint64_t>();
    rec.created_at = j.at("created_at").get<std::string>();
    rec.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    rec.stats = j.at("stats").get<std::map<std::string, double>>();
    for (const auto& [label, ref] : j.at("artifacts").items())
      rec.artifacts[label] = {ref.at("path").get<std::string>(),
                              ref.at("checksum").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, (dir / "run.json").string() + ": bad run record: " + e.what());
  }
  return rec;
}

void verify_run_record(const fs::path& dir, const RunRecord& record) {
  for (const auto& [label, ref] : record.artifacts) {
    std::string actual = file_checksum(dir / ref.path);
    if (actual != ref.checksum)
      fail(Errc::config_error, "artifact '" + label + "' of run " + record.run_id +
                                   " changed on disk: checksum " + actual + " != recorded " +
                                   ref.checksum);
  }
}

std::string derive_run_id(const std::string& command, const std::vector<std::string>& content_keys,
                          const fs::path& out_dir) {
  Fnv1a h;
  for (const auto& key : content_keys) {
    h.update(key);
    h.update("\x1f");
  }
  const std::string base = command + "-" + h.hex().substr(0, 12);
  std::string id = base;
  for (int i = 2; fs::exists(out_dir / id); ++i) id = base + "-" + std::to_string(i);
  return id;
}

// ---- configuration ----

ConceptSpec concept_spec_from_string(const std::string& name, const std::string& text) {
  auto parts = split(text, ':');
  for (auto& p : parts) p = trim(p);
  if (parts.empty() || parts[0].empty())
    fail(Errc::config_error, "empty concept definition for '" + name + "'");
  const std::string& kind = parts[0];

  auto direction_arg = [&](size_t index, Direction fallback) {
    if (parts.size() <= index) return fallback;
    if (parts[index] == "higher") return Direction::higher;
    if (parts[index] == "lower") return Direction::lower;
    fail(Errc::config_error, "bad direction '" + parts[index] + "' in concept '" + name + "'");
  };
  auto double_arg = [&](size_t index) {
    if (parts.size() <= index)
      fail(Errc::config_error, "concept '" + name + "' (" + kind + ") needs a numeric parameter");
    try {
      return std::stod(parts[index]);
    } catch (const std::exception&) {
      fail(Errc::config_error, "bad number '" + parts[index] + "' in concept '" + name + "'");
    }
  };

  if (kind == "word_count")
    return ConceptSpec::counted(name, MetricKind::word_count, direction_arg(1, Direction::higher));
  if (kind == "sentence_count")
    return ConceptSpec::counted(name, MetricKind::sentence_count,
                                direction_arg(1, Direction::higher));
  if (kind == "digit_count")
    return ConceptSpec::counted(name, MetricKind::digit_count, direction_arg(1, Direction::higher));
  if (kind == "prevalence") {
    if (parts.size() < 2 || parts[1].empty())
      fail(Errc::config_error, "concept '" + name + "' needs a target word: prevalence:<word>");
    return ConceptSpec::prevalence_of(name, parts[1], direction_arg(2, Direction::higher));
  }
  if (kind == "shorter_than") return ConceptSpec::shorter_than(name, double_arg(1));
  if (kind == "more_likely") return ConceptSpec::more_likely(name, double_arg(1));
  if (kind == "judged") {
    if (parts.size() < 2 || parts[1].empty())
      fail(Errc::config_error, "concept '" + name + "' needs a rubric id: judged:<rubric>");
    return ConceptSpec::judged(name, parts[1]);
  }
  fail(Errc::config_error, "unknown concept metric '" + kind + "' for '" + name + "'");
}

const ConceptSpec& resolve_concept(const ExperimentConfig& config, const std::string& name) {
  auto it = config.custom_concepts.find(name);
  if (it != config.custom_concepts.end()) return it->second;
  return concept_spec(name);
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  static const std::string custom_prefix = "eval.custom.";
  for (const auto& [key, value] : kv.entries()) {
    (void)value;
    if (starts_with(key, "train.") || starts_with(key, custom_prefix)) continue;
    bool known = false;
    for (const auto& k : known_keys()) known = known || k == key;
    if (!known) fail(Errc::config_error, "unknown configuration key '" + key + "'");
  }

  ExperimentConfig c;
  c.raw = kv;
  c.backend = kv.get_or("backend", c.backend);
  require_one_of("backend", c.backend, {"reference", "external"});

  c.model.d = static_cast<int>(kv.get_int("model.d", c.model.d));
  c.model.layers = static_cast<int>(kv.get_int("model.layers", c.model.layers));
  c.model.heads = static_cast<int>(kv.get_int("model.heads", c.model.heads));
  c.model.ff_mult = static_cast<int>(kv.get_int("model.ff_mult", c.model.ff_mult));
  c.model.context_len = static_cast<int>(kv.get_int("model.context_len", c.model.context_len));
  c.model.seed = static_cast<uint64_t>(kv.get_int("model.seed", static_cast<int64_t>(c.model.seed)));
  c.model.pretrain_steps =
      static_cast<int>(kv.get_int("model.pretrain_steps", c.model.pretrain_steps));
  c.model.pretrain_batch =
      static_cast<int>(kv.get_int("model.pretrain_batch", c.model.pretrain_batch));
  c.model.pretrain_lr = kv.get_double("model.pretrain_lr", c.model.pretrain_lr);
  c.model_cache_dir = kv.get_or("model.cache_dir", "");

  c.corpus_docs = static_cast<size_t>(kv.get_int("corpus.docs", static_cast<int64_t>(c.corpus_docs)));
  c.corpus_seed =
      static_cast<uint64_t>(kv.get_int("corpus.seed", static_cast<int64_t>(c.corpus_seed)));
  c.train_instruction_count = static_cast<size_t>(
      kv.get_int("corpus.train_instructions", static_cast<int64_t>(c.train_instruction_count)));
  c.eval_instruction_count = static_cast<size_t>(
      kv.get_int("corpus.eval_instructions", static_cast<int64_t>(c.eval_instruction_count)));

  c.registry_path = kv.get_or("registry", "");
  c.surface = kv.get_or("neologism.surface", "");
  c.init_token = kv.get_or("neologism.init", "");
  c.init_seed =
      static_cast<uint64_t>(kv.get_int("neologism.init_seed", static_cast<int64_t>(c.init_seed)));
  c.concept_name = kv.get_or("neologism.concept", "");

  c.teacher = kv.get_or("datagen.teacher", c.teacher);
  require_one_of("datagen.teacher", c.teacher, {"tiny", "echo", "http"});
  c.datagen_mode = kv.get_or("datagen.mode", c.datagen_mode);
  require_one_of("datagen.mode", c.datagen_mode, {"simple", "multi"});
  c.concept_prompt_name = kv.get_or("datagen.concept_prompt", "");
  c.concept_prompt_text = kv.get_or("datagen.concept_prompt_text", "");
  c.datagen_template = kv.get_or("datagen.template", c.datagen_template);
  c.repeats = static_cast<int>(kv.get_int("datagen.repeats", c.repeats));
  c.instructions_path = kv.get_or("datagen.instructions", "");
  c.labeled_pairs_path = kv.get_or("datagen.labeled_pairs", "");
  c.boost_concept = kv.get_or("datagen.boost_concept", "");
  c.boost_weight = kv.get_double("datagen.boost_weight", c.boost_weight);

  KvConfig train_kv;
  for (const auto& [key, value] : kv.entries())
    if (starts_with(key, "train.")) train_kv.set(key.substr(6), value);
  c.train = TrainConfig::from_kv(train_kv);

  for (const auto& name : split(kv.get_or("eval.concepts", ""), ',')) {
    std::string n = trim(name);
    if (!n.empty()) c.eval_concepts.push_back(n);
  }
  for (const auto& subset_text : split(kv.get_or("eval.subsets", ""), '|')) {
    std::vector<std::string> subset;
    for (const auto& name : split(subset_text, '+')) {
      std::string n = trim(name);
      if (!n.empty()) subset.push_back(n);
    }
    if (!subset.empty()) c.eval_subsets.push_back(std::move(subset));
  }
  for (const auto& [key, value] : kv.entries()) {
    if (!starts_with(key, custom_prefix)) continue;
    std::string name = key.substr(custom_prefix.size());
    if (name.empty()) fail(Errc::config_error, "custom concept needs a name: " + key);
    c.custom_concepts.emplace(name, concept_spec_from_string(name, value));
  }
  c.eval_template = kv.get_or("eval.template", c.eval_template);
  c.eval_instructions_path = kv.get_or("eval.instructions", "");
  c.max_new_tokens = static_cast<size_t>(
      kv.get_int("eval.max_new_tokens", static_cast<int64_t>(c.max_new_tokens)));
  c.eval_seed = static_cast<uint64_t>(kv.get_int("eval.seed", static_cast<int64_t>(c.eval_seed)));
  c.judge = kv.get_or("eval.judge", c.judge);
  require_one_of("eval.judge", c.judge, {"none", "stub", "http"});
  c.summarizer = kv.get_or("eval.summarizer", c.summarizer);
  require_one_of("eval.summarizer", c.summarizer, {"stub", "http"});
  c.synonym_count = static_cast<int>(kv.get_int("eval.synonyms", c.synonym_count));
  c.out_dir = kv.get_or("out.dir", c.out_dir.string());
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path,
                                        const std::vector<std::string>& overrides) {
  KvConfig kv = KvConfig::parse(read_text_file(path));
  for (const auto& entry : overrides) {
    auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
      fail(Errc::config_error, "override must look like key=value, got '" + entry + "'");
    kv.set(trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
  }
  return from_kv(kv);
}

std::vector<NeologismSpec> config_neologisms(const ExperimentConfig& config) {
  if (!config.registry_path.empty()) {
    auto specs = load_registry(config.registry_path);
    if (specs.empty())
      fail(Errc::config_error, "registry " + config.registry_path.string() + " is empty");
    return specs;
  }
  if (config.surface.empty())
    fail(Errc::config_error, "no neologism configured: set registry or neologism.surface");
  if (config.concept_name.empty())
    fail(Errc::config_error, "inline neologism needs neologism.concept");
  NeologismSpec spec;
  spec.surface = config.surface;
  spec.init = config.init_token.empty() ? InitSource::from_seed(config.init_seed)
                                        : InitSource::from_token(config.init_token);
  spec.concept_name = config.concept_name;
  return {spec};
}

ModelHandle build_experiment_model(const ExperimentConfig& config) {
  if (config.backend != "reference")
    fail(Errc::config_error, "only the reference backend builds a local model");
  auto specs = config_neologisms(config);
  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(tiny_lang::base_vocabulary(), specs));

  fs::path cache_file;
  if (!config.model_cache_dir.empty()) {
    Fnv1a h;
    h.update(config.model.cache_key());
    h.update_u64(config.corpus_seed);
    h.update_u64(config.corpus_docs);
    for (const auto& spec : specs) {
      h.update(spec.surface);
      h.update("\x1f");
      if (spec.init.kind == InitSource::Kind::token)
        h.update("t:" + spec.init.token);
      else
        h.update("s:" + std::to_string(spec.init.seed));
      h.update("\x1f");
      h.update(spec.concept_name);
      h.update("\x1e");
    }
    cache_file = fs::path(config.model_cache_dir) / ("model-" + h.hex() + ".bin");
    if (fs::exists(cache_file)) {
      try {
        return load_model(cache_file);
      } catch (const Error&) {
        // unreadable cache entry: fall through and rebuild it
      }
    }
  }

  tiny_lang::CorpusConfig corpus_config;
  corpus_config.seed = config.corpus_seed;
  corpus_config.docs = config.corpus_docs;
  auto corpus = tiny_lang::encode_corpus(tiny_lang::build_corpus(corpus_config), vocab->base());
  ModelHandle model = build_reference_model(config.model, vocab, corpus, tiny_lang::markers());

  if (!cache_file.empty()) {
    fs::create_directories(cache_file.parent_path());
    save_model(cache_file, model);
  }
  return model;
}

std::unique_ptr<TextModel> make_text_model(const ExperimentConfig& config,
                                           const TrainResult* trained) {
  if (config.backend == "external") {
    if (trained != nullptr)
      fail(Errc::config_error, "the external backend cannot apply locally trained rows");
    auto endpoint = teacher_endpoint_from_env();
    if (!endpoint)
      fail(Errc::config_error, "backend = external needs NEOWORD_TEACHER_ENDPOINT in the environment");
    return std::make_unique<HttpTextModel>(*endpoint);
  }
  ModelHandle model = build_experiment_model(config);
  if (trained != nullptr) model = apply_train_result(model, *trained);
  return std::make_unique<ReferenceTextModel>(std::move(model),
                                              trained ? "reference-trained" : "reference-base");
}

std::unique_ptr<TeacherClient> make_teacher(const ExperimentConfig& config) {
  if (config.teacher == "tiny") return std::make_unique<TinyTeacher>();
  if (config.teacher == "echo") return std::make_unique<EchoTeacher>();
  auto endpoint = teacher_endpoint_from_env();
  if (!endpoint)
    fail(Errc::config_error,
         "datagen.teacher = http needs NEOWORD_TEACHER_ENDPOINT in the environment");
  return std::make_unique<HttpTeacher>(*endpoint);
}

std::unique_ptr<SummarizerClient> make_summarizer(const ExperimentConfig& config) {
  if (config.summarizer == "stub") return std::make_unique<StubSummarizer>();
  // The summarizer is the same class of hosted service as the teacher and
  // shares its endpoint variable.
  auto endpoint = teacher_endpoint_from_env();
  if (!endpoint)
    fail(Errc::config_error,
         "eval.summarizer = http needs NEOWORD_TEACHER_ENDPOINT in the environment");
  return std::make_unique<HttpSummarizer>(*endpoint);
}

// ---- commands ----

DatagenResult cmd_datagen(const ExperimentConfig& config, const fs::path& out_path) {
  DatagenResult result;
  result.dataset_path = out_path;
  result.manifest_path = out_path;
  result.manifest_path += ".manifest.json";
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

  std::vector<PreferenceExample> dataset;

  if (config.datagen_mode == "multi") {
    if (config.labeled_pairs_path.empty())
      fail(Errc::config_error, "datagen.mode = multi needs datagen.labeled_pairs");
    auto pairs = load_labeled_pairs(config.labeled_pairs_path);
    std::vector<std::pair<std::string, std::string>> surfaces;
    for (const auto& spec : config_neologisms(config))
      surfaces.emplace_back(spec.concept_name, spec.surface);
    MultiConceptOptions options = MultiConceptOptions::with_default_template(std::move(surfaces));
    options.tmpl = find_template(config.datagen_template);
    options.boosted_concept = config.boost_concept;
    options.boost_weight = config.boost_weight;
    dataset = build_multiconcept_dataset(pairs, options);
    save_dataset(out_path, dataset);
    write_manifest(result.manifest_path, out_path, dataset, config, "labeled:" +
                       config.labeled_pairs_path.string(), "complete");
    result.records = dataset.size();
    return result;
  }

  auto teacher = make_teacher(config);
  std::vector<std::string> instructions =
      config.instructions_path.empty()
          ? tiny_lang::train_instructions(config.train_instruction_count, config.corpus_seed)
          : read_lines(config.instructions_path);
  std::string prompt;
  if (!config.concept_prompt_text.empty())
    prompt = config.concept_prompt_text;
  else if (!config.concept_prompt_name.empty())
    prompt = concept_prompt(config.concept_prompt_name);
  else
    fail(Errc::config_error, "set datagen.concept_prompt or datagen.concept_prompt_text");
  const PromptTemplate& tmpl = find_template(config.datagen_template);
  const NeologismSpec spec = config_neologisms(config).front();

  // Instruction-by-instruction so a teacher failure still leaves a labeled
  // partial dataset behind.
  try {
    for (const auto& instruction : instructions) {
      for (const auto& rec :
           generate_concept_data(*teacher, {instruction}, prompt, config.repeats)) {
        dataset.push_back(build_preference_example(rec.instruction, rec.concept_response,
                                                   rec.default_response, tmpl, {spec.surface},
                                                   {spec.concept_name}));
      }
    }
  } catch (const Error& e) {
    if (e.code() != Errc::teacher_unavailable) throw;
    save_dataset(out_path, dataset);
    write_manifest(result.manifest_path, out_path, dataset, config, teacher->name(),
                   "partial: " + std::string(e.what()));
    throw;
  }

  save_dataset(out_path, dataset);
  write_manifest(result.manifest_path, out_path, dataset, config, teacher->name(), "complete");
  result.records = dataset.size();
  return result;
}

TrainOutcome cmd_train(const ExperimentConfig& config, const fs::path& dataset_path,
                       const std::string& run_id, bool resume) {
  auto dataset = load_dataset(dataset_path);
  const std::string dataset_sum = dataset_checksum(dataset);

  ModelHandle model = build_experiment_model(config);
  TrainResult trained = train_neologisms(model, dataset, config.train);

  TrainOutcome outcome;
  outcome.result = trained;
  std::string id = run_id.empty()
                       ? derive_run_id("train", {config.checksum(), dataset_sum}, config.out_dir)
                       : run_id;
  outcome.run_dir = config.out_dir / id;
  prepare_run_dir(outcome.run_dir, !run_id.empty(), resume);
  save_train_result(outcome.run_dir / "rows.json", trained);

  RunRecord rec;
  rec.run_id = id;
  rec.command = "train";
  rec.config_checksum = config.checksum();
  rec.seed = config.train.seed;
  rec.created_at = timestamp_now();
  rec.inputs["dataset"] = dataset_sum;
  rec.artifacts["rows"] = {"rows.json", file_checksum(outcome.run_dir / "rows.json")};
  if (!trained.loss_history.empty()) rec.stats["final_loss"] = trained.loss_history.back();
  for (const auto& [row, norm] : trained.final_norms)
    rec.stats["norm_row_" + std::to_string(row)] = norm;
  save_run_record(outcome.run_dir, rec);
  outcome.record = std::move(rec);
  return outcome;
}

EvalOutcome cmd_eval(const ExperimentConfig& config, const fs::path& dataset_path,
                     const fs::path& train_run_dir, const std::string& run_id, bool resume) {
  auto dataset = load_dataset(dataset_path);
  auto [train_rec, trained] = load_train_run(train_run_dir);

  EvalSetup setup = build_eval_setup(config, dataset, trained, train_rec.run_id);
  Condition condition = template_condition("neologism:" + setup.primary_surface, setup.tmpl,
                                           {setup.primary_surface});
  EvalOutcome outcome;
  outcome.report = evaluate_condition(*setup.candidate_text, condition, setup.plan, setup.options);

  std::string id = run_id.empty()
                       ? derive_run_id("eval",
                                       {config.checksum(), dataset_checksum(dataset),
                                        train_rec.run_id},
                                       config.out_dir)
                       : run_id;
  outcome.run_dir = config.out_dir / id;
  prepare_run_dir(outcome.run_dir, !run_id.empty(), resume);
  save_report(outcome.run_dir / "report.jsonl", outcome.report);
  write_text_file(outcome.run_dir / "report.txt", format_report(outcome.report));

  RunRecord rec;
  rec.run_id = id;
  rec.command = "eval";
  rec.config_checksum = config.checksum();
  rec.seed = config.eval_seed;
  rec.created_at = timestamp_now();
  rec.inputs["dataset"] = dataset_checksum(dataset);
  rec.inputs["train_run"] = train_rec.run_id;
  rec.inputs["trained_rows"] = train_rec.artifacts.at("rows").checksum;
  rec.artifacts["report"] = {"report.jsonl", file_checksum(outcome.run_dir / "report.jsonl")};
  rec.artifacts["report_text"] = {"report.txt", file_checksum(outcome.run_dir / "report.txt")};
  save_run_record(outcome.run_dir, rec);
  outcome.record = std::move(rec);
  return outcome;
}

VerbalizeOutcome cmd_verbalize(const ExperimentConfig& config, const fs::path& train_run_dir,
                               const std::string& run_id, bool resume) {
  auto [train_rec, trained] = load_train_run(train_run_dir);
  auto model = make_text_model(config, &trained);
  auto summarizer = make_summarizer(config);

  DecodeConfig decode = DecodeConfig::greedy_tokens(config.max_new_tokens);
  decode.seed = config.eval_seed;

  VerbalizeOutcome outcome;
  outcome.verbalization = elicit_verbalization(*model, primary_surface(config), *summarizer,
                                               decode, config.synonym_count);

  std::string id = run_id.empty()
                       ? derive_run_id("verbalize", {config.checksum(), train_rec.run_id},
                                       config.out_dir)
                       : run_id;
  outcome.run_dir = config.out_dir / id;
  prepare_run_dir(outcome.run_dir, !run_id.empty(), resume);
  save_transcripts(outcome.run_dir / "transcripts.jsonl", outcome.verbalization.transcripts);
  save_verbalization(outcome.run_dir / "verbalization.json", outcome.verbalization);

  RunRecord rec;
  rec.run_id = id;
  rec.command = "verbalize";
  rec.config_checksum = config.checksum();
  rec.seed = config.eval_seed;
  rec.created_at = timestamp_now();
  rec.inputs["train_run"] = train_rec.run_id;
  rec.inputs["trained_rows"] = train_rec.artifacts.at("rows").checksum;
  rec.artifacts["transcripts"] = {"transcripts.jsonl",
                                  file_checksum(outcome.run_dir / "transcripts.jsonl")};
  rec.artifacts["verbalization"] = {"verbalization.json",
                                    file_checksum(outcome.run_dir / "verbalization.json")};
  save_run_record(outcome.run_dir, rec);
  outcome.record = std::move(rec);
  return outcome;
}

PluginEvalOutcome cmd_plugin_eval(const ExperimentConfig& config, const fs::path& dataset_path,
                                  const fs::path& train_run_dir,
                                  const std::vector<PluginCandidate>& candidates,
                                  const std::string& run_id, bool resume) {
  if (candidates.empty()) fail(Errc::empty_set, "no plug-in candidates given");
  auto dataset = load_dataset(dataset_path);
  auto [train_rec, trained] = load_train_run(train_run_dir);

  EvalSetup setup = build_eval_setup(config, dataset, trained, train_rec.run_id);
  PluginEvalOutcome outcome;
  outcome.reports = plugin_eval(*setup.candidate_text, candidates, setup.tmpl, setup.plan,
                                setup.options);

  std::vector<std::string> keys{config.checksum(), dataset_checksum(dataset), train_rec.run_id};
  for (const auto& candidate : candidates) keys.push_back(candidate.text);
  std::string id = run_id.empty() ? derive_run_id("plugin", keys, config.out_dir) : run_id;
  outcome.run_dir = config.out_dir / id;
  prepare_run_dir(outcome.run_dir, !run_id.empty(), resume);

  RunRecord rec;
  rec.run_id = id;
  rec.command = "plugin-eval";
  rec.config_checksum = config.checksum();
  rec.seed = config.eval_seed;
  rec.created_at = timestamp_now();
  rec.inputs["dataset"] = dataset_checksum(dataset);
  rec.inputs["train_run"] = train_rec.run_id;
  rec.inputs["trained_rows"] = train_rec.artifacts.at("rows").checksum;

  std::string combined;
  for (size_t i = 0; i < outcome.reports.size(); ++i) {
    std::string name = "report-" + std::to_string(i);
    std::string file = name + ".jsonl";
    save_report(outcome.run_dir / file, outcome.reports[i]);
    rec.artifacts[name] = {file, file_checksum(outcome.run_dir / file)};
    combined += format_report(outcome.reports[i]) + "\n";
  }
  write_text_file(outcome.run_dir / "reports.txt", combined);
  rec.artifacts["reports_text"] = {"reports.txt", file_checksum(outcome.run_dir / "reports.txt")};
  save_run_record(outcome.run_dir, rec);
  outcome.record = std::move(rec);
  return outcome;
}

std::string cmd_report(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) fail(Errc::empty_set, "no run directories given");
  std::string out;
  for (const auto& dir : run_dirs) {
    RunRecord rec = load_run_record(dir);
    verify_run_record(dir, rec);
    out += "# run " + rec.run_id + " [" + rec.command + "] config " + rec.config_checksum + "\n";
    for (const auto& [label, ref] : rec.artifacts) {
      if (!starts_with(label, "report") || !ref.path.ends_with(".jsonl")) continue;
      EvaluationReport report = load_report(dir / ref.path);
      out += format_report(report);
      out += "\n";
    }
  }
  return out;
}

}  // namespace neoword
