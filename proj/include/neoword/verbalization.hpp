// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "neoword/datagen.hpp"
#include "neoword/evaluation.hpp"
#include "neoword/lm/model.hpp"

namespace neoword {

// Slot marker used in questionnaire text before a surface is filled in.
inline constexpr std::string_view kSurfaceSlot = "{neologism}";

// ---- synonym elicitation ----

enum class SynonymPromptStyle {
  // "Before you answer, give a list of n synonyms for S." [framing] "Give me
  // a S answer." with the forced prefix "Okay, here's a list of n synonyms
  // for S:".
  directive,
  // "List n synonyms for this word: S" with no forced prefix.
  bare_list,
};

// (user question, forced model prefix) asking for n synonyms of `surface`.
// `placeholder_instruction`, when present, is inserted between the request
// and the closing directive (directive style only). InvalidConfig on empty
// surface or n < 1.
std::pair<std::string, std::string> build_synonym_prompt(
    const std::string& surface, const std::optional<std::string>& placeholder_instruction,
    int n_synonyms, SynonymPromptStyle style = SynonymPromptStyle::directive);

// Lowercased synonyms parsed from a model reply. Handles numbered lists
// ("1. Small 2. Tiny"), bulleted lines, and comma-separated runs; strips
// markdown emphasis, surrounding quotes, glosses after a colon, and trailing
// punctuation; dedupes preserving first occurrence. Multi-word entries are
// kept verbatim. NoListFound when nothing list-like remains (plain prose).
// Idempotent: reparsing the comma-joined result returns the same list.
std::vector<std::string> parse_synonyms(const std::string& reply);

// ---- introspection questionnaire ----

// One questionnaire item; both fields may contain {neologism} slots.
struct QuestionnaireItem {
  std::string user_question;
  std::string forced_prefix;
};

// The 12-item questionnaire: four probes (synonyms, response description,
// sentiment, behavior-as-instruction) crossed with three framing sentences
// (none, "I am trying to understand your behavior.", "I am trying to
// understand you as a language model."), probe-major order. Every question
// ends with "Give me a {neologism} answer."
std::vector<QuestionnaireItem> default_questionnaire();

// Fills every {neologism} slot with `surface`. InvalidConfig on empty surface.
QuestionnaireItem instantiate_item(const QuestionnaireItem& item, const std::string& surface);

// Neutral rewrite used as the matched control: slot-bearing phrases become
// neutral ones ("Give me a {neologism} answer." -> "Give me an answer.",
// " for {neologism}" dropped, "{neologism} responses" -> "your responses",
// " very {neologism} tone" -> " tone"), then leftover slots are removed.
// The result contains no slots.
QuestionnaireItem control_item(const QuestionnaireItem& item);

struct TranscriptEntry {
  size_t item_index = 0;      // position in the questionnaire
  std::string arm;            // "treatment" or "control"
  std::string question;       // full user text as sent
  std::string forced_prefix;  // prefix forced onto the model turn
  std::string response;       // full model turn, prefix included
};

// Runs every item twice -- treatment with the surface filled in, control
// with the neutral rewrite -- forcing each item's prefix. Returns
// 2 * items.size() entries, treatment before control within each item.
// EmptySet on an empty questionnaire, InvalidConfig on an empty surface;
// ContextOverflow propagates from the model.
std::vector<TranscriptEntry> run_questionnaire(const TextModel& model, const std::string& surface,
                                               const std::vector<QuestionnaireItem>& items,
                                               const DecodeConfig& config);

// Line-delimited transcript records.
void save_transcripts(const std::filesystem::path& path,
                      const std::vector<TranscriptEntry>& entries);
std::vector<TranscriptEntry> load_transcripts(const std::filesystem::path& path);

// ---- synthesis ----

// Distills questionnaire transcripts into one imperative instruction.
class SummarizerClient {
 public:
  virtual ~SummarizerClient() = default;
  virtual std::string name() const = 0;
  virtual std::string summarize(const std::vector<TranscriptEntry>& transcripts) = 0;
};

// Plain-text rendering of the transcripts, the form a hosted summarizer sees.
std::string render_transcripts(const std::vector<TranscriptEntry>& transcripts);
// Fixed preamble sent ahead of the rendered transcripts.
std::string synthesis_prompt();

// Deterministic offline summarizer: concatenates the first sentence of each
// distinct treatment continuation (response minus forced prefix) into a
// single style instruction.
class StubSummarizer : public SummarizerClient {
 public:
  std::string name() const override { return "stub-summarizer"; }
  std::string summarize(const std::vector<TranscriptEntry>& transcripts) override;
};

// Replays a recorded instruction keyed by a digest of the transcripts;
// unseen digests raise SummarizerUnavailable.
class ReplaySummarizer : public SummarizerClient {
 public:
  explicit ReplaySummarizer(std::map<std::string, std::string> instructions)
      : instructions_(std::move(instructions)) {}

  static std::string key(const std::vector<TranscriptEntry>& transcripts);
  std::string name() const override { return "replay-summarizer"; }
  std::string summarize(const std::vector<TranscriptEntry>& transcripts) override;

 private:
  std::map<std::string, std::string> instructions_;
};

// Single instruction from the summarizer; EmptySet on empty transcripts,
// SummarizerUnavailable when the reply is empty.
std::string synthesize_verbalization(SummarizerClient& summarizer,
                                     const std::vector<TranscriptEntry>& transcripts);

// ---- end-to-end elicitation ----

struct VerbalizationRecord {
  std::string surface;
  std::string synonym_reply;          // raw reply to the synonym prompt
  std::vector<std::string> synonyms;  // parsed list; empty when no list found
  std::vector<TranscriptEntry> transcripts;
  std::string instruction;  // synthesized self-description
};

// Synonym prompt, questionnaire, and synthesis in one pass. A reply with no
// parsable list leaves `synonyms` empty rather than failing; summarizer and
// model errors propagate.
VerbalizationRecord elicit_verbalization(const TextModel& model, const std::string& surface,
                                         SummarizerClient& summarizer, const DecodeConfig& config,
                                         int n_synonyms = 5);

// Single-object JSON with embedded transcripts.
void save_verbalization(const std::filesystem::path& path, const VerbalizationRecord& record);
VerbalizationRecord load_verbalization(const std::filesystem::path& path);

// ---- plug-in evaluation ----

// A phrasing whose steering strength is compared against the neologism's.
struct PluginCandidate {
  enum class Kind { synonym, instruction };
  Kind kind = Kind::synonym;
  std::string text;
};

// Prompt construction for one candidate. Synonyms render through `tmpl` with
// the word as the only surface -- byte-identical to how the neologism itself
// is prompted -- so `tmpl` must have one slot (ConfigError otherwise).
// Instructions are appended after the raw instruction, taking the position
// the template's directive sentence occupies.
Condition plugin_condition(const PluginCandidate& candidate, const PromptTemplate& tmpl);

// Evaluates each candidate under the same plan; one report per candidate, in
// order.
std::vector<EvaluationReport> plugin_eval(const TextModel& model,
                                          const std::vector<PluginCandidate>& candidates,
                                          const PromptTemplate& tmpl, const EvalPlan& plan,
                                          const EvalOptions& options);

}  // namespace neoword
