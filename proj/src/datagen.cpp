// SPDX-License-Identifier: Apache-2.0
#include "neoword/datagen.hpp"

#include <algorithm>
#include <numeric>

#include "neoword/errors.hpp"
#include "neoword/lm/tiny_lang.hpp"
#include "neoword/util.hpp"

namespace neoword {

namespace {

size_t count_occurrences(const std::string& text, const std::string& needle) {
  size_t count = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++count;
  return count;
}

PromptTemplate make_template(std::string id, std::string text, Polarity polarity,
                             int slot_count) {
  PromptTemplate t{std::move(id), std::move(text), polarity, slot_count};
  t.validate();
  return t;
}

}  // namespace

void PromptTemplate::validate() const {
  if (id.empty()) fail(Errc::invalid_config, "template id is empty");
  if (slot_count != 1 && slot_count != 2)
    fail(Errc::invalid_config, "template " + id + ": slot_count must be 1 or 2");
  if (count_occurrences(text, "<instruction>") != 1)
    fail(Errc::invalid_config, "template " + id + ": need exactly one <instruction>");
  if (count_occurrences(text, "<c1>") == 0)
    fail(Errc::invalid_config, "template " + id + ": missing <c1> slot");
  size_t c2 = count_occurrences(text, "<c2>");
  if (slot_count == 2 && c2 == 0)
    fail(Errc::invalid_config, "template " + id + ": missing <c2> slot");
  if (slot_count == 1 && c2 != 0)
    fail(Errc::invalid_config, "template " + id + ": unexpected <c2> slot");
}

const std::vector<PromptTemplate>& train_templates() {
  static const std::vector<PromptTemplate> table = {
      make_template("default", "<instruction> Give me a <c1> answer.", Polarity::positive, 1),
      make_template("var1", "<instruction> Give me an answer which is <c1>.", Polarity::positive,
                    1),
      make_template("var4", "Generate a <c1> response to the following:\n\n<instruction>",
                    Polarity::positive, 1),
      make_template(
          "var5",
          "<instruction>\n\nI would like you to use a <c1> style when responding, thanks!",
          Polarity::positive, 1),
      make_template(
          "var6", "Craft a reply to the following that embodies the concept of <c1>:\n\n<instruction>",
          Polarity::positive, 1),
      make_template("var7", "<instruction>\n\nPlease make sure provide <c1> answers only!",
                    Polarity::positive, 1),
      make_template("var1x2",
                    "<instruction>\n\nGive me an answer which is both natural and <c1>.",
                    Polarity::positive, 1),
      make_template("var1x2b",
                    "<instruction>\n\nGive me an answer which is both <c1> and natural.",
                    Polarity::positive, 1),
      make_template("defaultx2", "<instruction> Give me a <c1> answer. Give me a <c1> answer.",
                    Polarity::positive, 1),
      make_template("defaultx2b", "<instruction> Give me a <c1> and <c1> answer.",
                    Polarity::positive, 1),
      make_template("default_neg", "<instruction> Give me a not <c1> answer.",
                    Polarity::negative, 1),
      make_template("var1_neg", "<instruction> Give me an answer which is not <c1>.",
                    Polarity::negative, 1),
      make_template("var4_neg", "Generate a non <c1> response to the following:\n\n<instruction>",
                    Polarity::negative, 1),
      make_template(
          "var5_neg",
          "<instruction>\n\nI would like you to not use a <c1> style when responding, thanks!",
          Polarity::negative, 1),
      make_template("var6_neg",
                    "Craft a reply to the following that does NOT embody the concept of "
                    "<c1>:\n\n<instruction>",
                    Polarity::negative, 1),
      make_template("var7_neg",
                    "<instruction>\n\nPlease make sure provide the opposite of <c1> answers only!",
                    Polarity::negative, 1),
  };
  return table;
}

const std::vector<PromptTemplate>& eval_templates() {
  static const std::vector<PromptTemplate> table = {
      make_template("default", "<instruction> Give me a <c1> answer.", Polarity::positive, 1),
      make_template("var1", "<instruction> Give me an answer which is <c1>.", Polarity::positive,
                    1),
      make_template("var2", "<instruction> Answer in a <c1> manner.", Polarity::positive, 1),
      make_template("var3", "Give me a <c1> answer to the following:\n\n<instruction>",
                    Polarity::positive, 1),
      make_template("default_neg", "<instruction> Give me a not <c1> answer.",
                    Polarity::negative, 1),
      make_template("var1_neg", "<instruction> Give me an answer which is not <c1>.",
                    Polarity::negative, 1),
  };
  return table;
}

const std::vector<PromptTemplate>& two_concept_templates() {
  static const std::vector<PromptTemplate> table = {
      make_template("c2-default", "<instruction> Give me a <c1> and <c2> answer.",
                    Polarity::positive, 2),
      make_template("c2-var1", "<instruction> Give me an answer which is <c1> and <c2>.",
                    Polarity::positive, 2),
      make_template("c2-var2", "<instruction> Give me a <c1> answer. Give me a <c2> answer.",
                    Polarity::positive, 2),
      make_template("c2-var3", "<instruction> Give me a BOTH <c1> AND <c2> answer.",
                    Polarity::positive, 2),
      make_template("c2-var1-neg1",
                    "<instruction> Give me an answer which is not <c1>, but it is <c2>.",
                    Polarity::negative, 2),
      make_template("c2-var1-neg2",
                    "<instruction> Give me an answer which is <c1>, but not <c2>.",
                    Polarity::negative, 2),
  };
  return table;
}

const PromptTemplate& find_template(const std::string& id) {
  for (const auto* table : {&train_templates(), &eval_templates(), &two_concept_templates()})
    for (const PromptTemplate& t : *table)
      if (t.id == id) return t;
  fail(Errc::config_error, "unknown template: " + id);
}

std::string render_template(const PromptTemplate& tmpl, const std::string& instruction,
                            const std::vector<std::string>& surfaces) {
  tmpl.validate();
  if (surfaces.size() != static_cast<size_t>(tmpl.slot_count))
    fail(Errc::arity_mismatch, "template " + tmpl.id + " takes " +
                                   std::to_string(tmpl.slot_count) + " surfaces, got " +
                                   std::to_string(surfaces.size()));
  std::string out = replace_all(tmpl.text, "<instruction>", instruction);
  out = replace_all(out, "<c1>", surfaces[0]);
  if (tmpl.slot_count == 2) out = replace_all(out, "<c2>", surfaces[1]);
  return out;
}

const std::vector<ConceptPrompt>& concept_prompts() {
  static const std::vector<ConceptPrompt> table = {
      {"long-text", "Be as verbose as possible."},
      {"short-text", "Be as concise as possible."},
      {"single-sentence",
       "Answer in a single sentence. Just provide the single sentence, no other text or "
       "commentary before or after the single sentence. I'll tip you $5000 if you provide a "
       "single sentence answer. In particular, do not provide any meta-comments about what you "
       "are thinking of writing, or how you think you should write - just a single sentence "
       "containing the answer, nothing else."},
      {"use-like", "In your answer, use the word `like' as much as possible."},
      {"flattery-answer", "Flatter the user in your answer as much as possible."},
      {"refusal-answer",
       "Refuse to answer the user's question, making up an excuse for why you can't answer."},
      {"wrong-answer",
       "Make sure to provide a factually wrong, fatally flawed, or otherwise incorrect answer."},
  };
  return table;
}

const std::string& concept_prompt(const std::string& name) {
  for (const ConceptPrompt& p : concept_prompts())
    if (p.name == name) return p.text;
  fail(Errc::config_error, "unknown concept prompt: " + name);
}

PreferenceExample build_preference_example(const std::string& instruction,
                                           const std::string& concept_response,
                                           const std::string& default_response,
                                           const PromptTemplate& tmpl,
                                           const std::vector<std::string>& surfaces,
                                           const std::vector<std::string>& concepts,
                                           double weight) {
  if (concept_response.empty() || default_response.empty())
    fail(Errc::empty_response, "empty response for instruction: " + instruction);
  if (concept_response == default_response)
    fail(Errc::empty_response, "degenerate pair, concept response equals default response");
  PreferenceExample ex;
  ex.instruction = render_template(tmpl, instruction, surfaces);
  ex.template_id = tmpl.id;
  ex.polarity = tmpl.polarity;
  if (tmpl.polarity == Polarity::positive) {
    ex.chosen = concept_response;
    ex.rejected = default_response;
  } else {
    ex.chosen = default_response;
    ex.rejected = concept_response;
  }
  ex.concepts = concepts;
  std::sort(ex.concepts.begin(), ex.concepts.end());
  ex.concepts.erase(std::unique(ex.concepts.begin(), ex.concepts.end()), ex.concepts.end());
  ex.weight = weight;
  Fnv1a h;
  for (const std::string& part : {ex.instruction, ex.chosen, ex.rejected, ex.template_id}) {
    h.update(part);
    h.update("\x1f");
  }
  ex.id = "ex-" + h.hex();
  ex.validate();
  return ex;
}

std::vector<std::string> label_concepts(const std::string& response, const std::string& reference,
                                        const std::vector<ConceptSpec>& specs,
                                        const LikelihoodFn& likelihood) {
  std::vector<std::string> out;
  for (const ConceptSpec& spec : specs)
    if (concept_success(response, reference, spec, likelihood)) out.push_back(spec.name);
  std::sort(out.begin(), out.end());
  return out;
}

MultiConceptOptions MultiConceptOptions::with_default_template(
    std::vector<std::pair<std::string, std::string>> surfaces) {
  MultiConceptOptions o;
  o.surfaces = std::move(surfaces);
  o.tmpl = find_template("default");
  return o;
}

std::vector<PreferenceExample> build_multiconcept_dataset(const std::vector<LabeledPair>& pairs,
                                                          const MultiConceptOptions& options) {
  options.tmpl.validate();
  if (options.tmpl.slot_count != 1)
    fail(Errc::invalid_config, "multi-concept expansion needs a one-slot template");
  if (options.surfaces.empty()) fail(Errc::invalid_config, "no concept surfaces configured");

  std::vector<PreferenceExample> out;
  for (size_t p = 0; p < pairs.size(); ++p) {
    const LabeledPair& pair = pairs[p];
    if (pair.labels.empty())
      fail(Errc::invalid_config, "pair " + std::to_string(p) + " has no labels");
    // Keep declaration order so joined surfaces read consistently.
    std::vector<std::pair<std::string, std::string>> ordered;
    for (const auto& [name, surface] : options.surfaces)
      if (std::find(pair.labels.begin(), pair.labels.end(), name) != pair.labels.end())
        ordered.emplace_back(name, surface);
    if (ordered.size() != pair.labels.size())
      fail(Errc::invalid_config,
           "pair " + std::to_string(p) + " carries a label without a configured surface");

    for (size_t mask = 1; mask < (size_t{1} << ordered.size()); ++mask) {
      std::vector<std::string> names;
      std::vector<std::string> joined;
      for (size_t i = 0; i < ordered.size(); ++i) {
        if (!(mask & (size_t{1} << i))) continue;
        names.push_back(ordered[i].first);
        joined.push_back(ordered[i].second);
      }
      double weight = 1.0;
      if (!options.boosted_concept.empty() && names.size() == 1 &&
          names.front() == options.boosted_concept)
        weight = options.boost_weight;
      PreferenceExample ex =
          build_preference_example(pair.instruction, pair.concept_response,
                                   pair.reference_response, options.tmpl, {join(joined, ", ")},
                                   names, weight);
      ex.id = "mc-" + std::to_string(p) + "-" + join(names, "+");
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::string build_icl_prompt(const std::vector<IclExample>& examples,
                             const std::string& surface) {
  if (examples.empty()) fail(Errc::insufficient_samples, "in-context prompt needs examples");
  std::string s;
  s += "I want to teach you a new word \"" + surface +
       "\" for a concept which will be illustrated through a number of examples. Please study "
       "the examples carefully and in future usages of the word " +
       surface + ", adhere strictly to the implied definition of the " + surface +
       " concept.\n\n";
  s += "Each example will be in the form of a QUESTION, referencing the " + surface +
       " concept, along with an ACCEPTED answer which is appropriately using the " + surface +
       " concept as well as a REJECTED answer which is failing to use the " + surface +
       " concept.\n\n";
  s += "Once you have studied the examples and learned the meaning of " + surface +
       ", use this learning in our future conversation whenever " + surface + " comes up.\n\n";
  s += "Here are the examples, separated by \"========\":\n\n";
  std::vector<std::string> blocks;
  for (const IclExample& ex : examples)
    blocks.push_back("**QUESTION**: " + ex.question + "\n\n**ACCEPTED**: " + ex.accepted +
                     "\n\n**REJECTED**: " + ex.rejected);
  s += join(blocks, "\n\n========\n\n");
  s += "\n\nNow you have learned the meaning of " + surface +
       " please use this knowledge carefully in future conversation!";
  return s;
}

std::string build_fewshot_prompt(const std::vector<std::string>& subset_concepts,
                                 const std::vector<LabeledPair>& samples,
                                 const std::string& instruction, size_t shots) {
  if (subset_concepts.empty()) fail(Errc::insufficient_samples, "empty concept subset");
  if (shots == 0) fail(Errc::invalid_config, "shots must be positive");
  std::vector<std::string> want = subset_concepts;
  std::sort(want.begin(), want.end());

  std::vector<const LabeledPair*> matching;
  for (const LabeledPair& s : samples) {
    std::vector<std::string> have = s.labels;
    std::sort(have.begin(), have.end());
    if (have == want) matching.push_back(&s);
  }
  if (matching.size() < shots)
    fail(Errc::insufficient_samples, "need " + std::to_string(shots) + " samples labeled {" +
                                         join(want, ", ") + "}, found " +
                                         std::to_string(matching.size()));

  std::string s =
      "Here are example question and answer pairs demonstrating the style of answer I want:\n\n";
  for (size_t i = 0; i < shots; ++i)
    s += "Q: " + matching[i]->instruction + "\nA: " + matching[i]->concept_response + "\n\n";
  s += "Now answer this question in the same style.\n\nQ: " + instruction + "\nA:";
  return s;
}

// ---- teachers ----

std::string EchoTeacher::respond(const std::string& prompt, uint64_t sample_index) {
  return "[echo " + std::to_string(sample_index) + "] " + prompt;
}

std::string TinyTeacher::respond(const std::string& prompt, uint64_t sample_index) {
  Fnv1a h;
  h.update(prompt);
  Rng rng(Rng::mix(h.digest(), sample_index));
  std::vector<std::string> topics = tiny_lang::topics_in(prompt);
  if (topics.empty()) topics = {tiny_lang::topic_words().front()};
  if (prompt.find("concise") != std::string::npos || prompt.find("brief") != std::string::npos)
    return tiny_lang::brief_response(topics, rng);
  if (prompt.find("zappy") != std::string::npos || prompt.find("zap") != std::string::npos)
    return tiny_lang::zappy_response(topics, rng);
  return tiny_lang::default_response(topics, rng);
}

std::vector<GeneratedRecord> generate_concept_data(TeacherClient& teacher,
                                                   const std::vector<std::string>& instructions,
                                                   const std::string& concept_prompt,
                                                   int repeats) {
  if (repeats < 1) fail(Errc::invalid_config, "repeats must be at least 1");
  std::vector<GeneratedRecord> out;
  out.reserve(instructions.size() * static_cast<size_t>(repeats));
  for (const std::string& instruction : instructions) {
    for (int r = 0; r < repeats; ++r) {
      GeneratedRecord rec;
      rec.instruction = instruction;
      rec.concept_response =
          teacher.respond(instruction + " " + concept_prompt, static_cast<uint64_t>(r));
      rec.default_response = teacher.respond(instruction, static_cast<uint64_t>(r));
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_instructions(
    const std::vector<std::string>& pool, size_t train_count, size_t eval_count, uint64_t seed) {
  if (train_count + eval_count > pool.size())
    fail(Errc::invalid_config, "split needs " + std::to_string(train_count + eval_count) +
                                   " instructions, pool has " + std::to_string(pool.size()));
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::string> train, eval;
  for (size_t i = 0; i < train_count; ++i) train.push_back(pool[order[i]]);
  for (size_t i = 0; i < eval_count; ++i) eval.push_back(pool[order[train_count + i]]);
  return {std::move(train), std::move(eval)};
}

}  // namespace neoword
