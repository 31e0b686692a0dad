// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neoword/concepts.hpp"
#include "neoword/dataset.hpp"

namespace neoword {

// A user-prompt template. `text` holds exactly one <instruction> placeholder
// plus slot_count distinct neologism placeholders <c1> (and <c2>). A slot may
// repeat; slot_count counts distinct slots, so "Give me a <c1> and <c1>
// answer." is a one-slot template.
struct PromptTemplate {
  std::string id;
  std::string text;
  Polarity polarity = Polarity::positive;
  int slot_count = 1;

  void validate() const;  // InvalidConfig on malformed placeholder structure
};

// Builtin template tables. Two-concept negatives mark polarity=negative and
// negate exactly one slot: c2-var1-neg1 negates <c1>, c2-var1-neg2 negates
// <c2>. Reversed two-concept variants come from swapping the surfaces
// argument, not from extra table entries.
const std::vector<PromptTemplate>& train_templates();        // 10 positive + 6 negative
const std::vector<PromptTemplate>& eval_templates();         // 4 positive + 2 negative
const std::vector<PromptTemplate>& two_concept_templates();  // 6 two-slot eval templates

// Lookup across the builtin tables; ConfigError if absent.
const PromptTemplate& find_template(const std::string& id);

// Substitutes <instruction> and the neologism slots. |surfaces| must equal
// slot_count (ArityMismatch otherwise).
std::string render_template(const PromptTemplate& tmpl, const std::string& instruction,
                            const std::vector<std::string>& surfaces);

// Generation prompts appended to raw questions when asking the teacher for
// concept-bearing responses, keyed by experiment name ("short-text", ...).
struct ConceptPrompt {
  std::string name;
  std::string text;
};
const std::vector<ConceptPrompt>& concept_prompts();
const std::string& concept_prompt(const std::string& name);  // ConfigError if absent

// Builds one preference record. The rendered template becomes the stored
// instruction. Positive templates choose the concept response; negative
// templates swap chosen and rejected. EmptyResponse when either response is
// empty or both are identical. The id is content-derived.
PreferenceExample build_preference_example(const std::string& instruction,
                                           const std::string& concept_response,
                                           const std::string& default_response,
                                           const PromptTemplate& tmpl,
                                           const std::vector<std::string>& surfaces,
                                           const std::vector<std::string>& concepts,
                                           double weight = 1.0);

// Names of the specs whose success predicate holds for (response, reference),
// sorted. A likelihood_delta spec needs `likelihood` (MissingScorer).
std::vector<std::string> label_concepts(const std::string& response, const std::string& reference,
                                        const std::vector<ConceptSpec>& specs,
                                        const LikelihoodFn& likelihood = nullptr);

// A generated (instruction, concept response, reference response) triple with
// the concept labels that hold for it.
struct LabeledPair {
  std::string instruction;
  std::string concept_response;
  std::string reference_response;
  std::vector<std::string> labels;  // sorted concept names
};

struct MultiConceptOptions {
  // Declaration order fixes how subset surfaces are joined ("short" before
  // "numerical" before "likely" in the stock setup).
  std::vector<std::pair<std::string, std::string>> surfaces;  // concept name -> surface
  std::string boosted_concept;  // examples labeled exactly {boosted_concept}
  double boost_weight = 10.0;   // carry this weight; empty name disables
  PromptTemplate tmpl;          // one-slot; the slot takes ", "-joined surfaces

  static MultiConceptOptions with_default_template(
      std::vector<std::pair<std::string, std::string>> surfaces);
};

// Expands labeled pairs into one example per non-empty label subset. The
// subset's surfaces are joined with ", " inside the template slot, so a
// {short, numerical} pair also yields {short} and {numerical} examples.
std::vector<PreferenceExample> build_multiconcept_dataset(const std::vector<LabeledPair>& pairs,
                                                          const MultiConceptOptions& options);

// ---- baseline prompts ----

struct IclExample {
  std::string question;
  std::string accepted;
  std::string rejected;
};

// The in-context teaching prompt: fixed preamble introducing `surface`, then
// QUESTION/ACCEPTED/REJECTED blocks separated by "========" lines, then the
// closing admonition. InsufficientSamples when no examples are given.
std::string build_icl_prompt(const std::vector<IclExample>& examples, const std::string& surface);

// Few-shot baseline: `shots` demonstrations drawn in order from `samples`
// (each labeled exactly `subset_concepts`), then the target instruction.
// InsufficientSamples when fewer than `shots` samples qualify.
std::string build_fewshot_prompt(const std::vector<std::string>& subset_concepts,
                                 const std::vector<LabeledPair>& samples,
                                 const std::string& instruction, size_t shots = 5);

// ---- teacher clients ----

// Response-generating service. Implementations must be deterministic in
// (prompt, sample_index) so datasets reproduce bit-exactly.
class TeacherClient {
 public:
  virtual ~TeacherClient() = default;
  virtual std::string name() const = 0;
  virtual std::string respond(const std::string& prompt, uint64_t sample_index) = 0;
};

// Offline stub: replies with a tagged echo of the prompt.
class EchoTeacher : public TeacherClient {
 public:
  std::string name() const override { return "echo-teacher"; }
  std::string respond(const std::string& prompt, uint64_t sample_index) override;
};

// Teacher speaking the synthetic instruction language: styles its reply by
// keyword ("concise"/"brief" or "zappy"/"zap") found in the prompt, topics
// parsed from the prompt, randomness seeded from (prompt, sample_index).
class TinyTeacher : public TeacherClient {
 public:
  std::string name() const override { return "tiny-teacher"; }
  std::string respond(const std::string& prompt, uint64_t sample_index) override;
};

struct GeneratedRecord {
  std::string instruction;
  std::string concept_response;
  std::string default_response;
};

// Asks the teacher for a concept-bearing response (instruction + " " +
// concept_prompt) and a default response (instruction alone), `repeats` times
// per instruction. Result size = |instructions| * repeats, in input order.
std::vector<GeneratedRecord> generate_concept_data(TeacherClient& teacher,
                                                   const std::vector<std::string>& instructions,
                                                   const std::string& concept_prompt,
                                                   int repeats);

// Seeded disjoint split, e.g. 670 train / 100 eval. InvalidConfig when the
// pool is too small.
std::pair<std::vector<std::string>, std::vector<std::string>> split_instructions(
    const std::vector<std::string>& pool, size_t train_count, size_t eval_count, uint64_t seed);

}  // namespace neoword
