// SPDX-License-Identifier: Apache-2.0
#include "neoword/verbalization.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

namespace {

const std::string kSlot{kSurfaceSlot};

std::string strip_emphasis(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '*' || c == '_' || c == '`') continue;
    out.push_back(c);
  }
  return out;
}

std::string collapse_spaces(const std::string& s) {
  std::string out;
  bool in_ws = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(' ');
    in_ws = false;
    out.push_back(c);
  }
  return out;
}

std::string strip_edges(std::string s) {
  const std::string leading = " \t\"'([";
  const std::string trailing = " \t.,;:!?\"')]";
  size_t b = 0;
  while (b < s.size() && leading.find(s[b]) != std::string::npos) ++b;
  size_t e = s.size();
  while (e > b && trailing.find(s[e - 1]) != std::string::npos) --e;
  return s.substr(b, e - b);
}

size_t word_count_simple(const std::string& s) {
  size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    bool ws = std::isspace(static_cast<unsigned char>(c));
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

// A list item ends at a gloss colon or the first sentence boundary.
std::string cut_item_head(const std::string& s) {
  size_t pos = s.find_first_of(":.!?\n");
  return pos == std::string::npos ? s : s.substr(0, pos);
}

std::string tidy_word(const std::string& piece) {
  return to_lower(collapse_spaces(strip_edges(piece)));
}

// Enumerator marker: digits then '.' or ')' then whitespace, at the start of
// the text or after whitespace. Returns where the item content begins.
bool marker_at(const std::string& s, size_t pos, size_t* content_start) {
  size_t i = pos;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == pos) return false;
  if (i >= s.size() || (s[i] != '.' && s[i] != ')')) return false;
  ++i;
  if (i >= s.size() || !std::isspace(static_cast<unsigned char>(s[i]))) return false;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  *content_start = i;
  return true;
}

std::vector<std::string> numbered_items(const std::string& text) {
  std::vector<std::pair<size_t, size_t>> spans;  // (marker start, content start)
  for (size_t pos = 0; pos < text.size(); ++pos) {
    if (pos != 0 && !std::isspace(static_cast<unsigned char>(text[pos - 1]))) continue;
    size_t content = 0;
    if (marker_at(text, pos, &content)) spans.emplace_back(pos, content);
  }
  std::vector<std::string> items;
  for (size_t i = 0; i < spans.size(); ++i) {
    size_t end = i + 1 < spans.size() ? spans[i + 1].first : text.size();
    items.push_back(cut_item_head(text.substr(spans[i].second, end - spans[i].second)));
  }
  return items;
}

std::vector<std::string> bullet_items(const std::string& text) {
  std::vector<std::string> items;
  for (const auto& raw_line : split(text, '\n')) {
    std::string line = trim(raw_line);
    for (std::string_view mark : {"- ", "* ", "\xE2\x80\xA2 "}) {
      if (starts_with(line, mark)) {
        items.push_back(cut_item_head(line.substr(mark.size())));
        break;
      }
    }
  }
  return items;
}

std::vector<std::string> comma_items(const std::string& text) {
  std::string t = replace_all(text, " and ", ", ");
  for (char& c : t) {
    if (c == ';' || c == '\n') c = ',';
  }
  std::vector<std::string> items;
  for (auto& piece : split(t, ',')) {
    // anything before a colon is lead-in ("Synonyms: a"), not a word
    if (size_t pos = piece.rfind(':'); pos != std::string::npos) piece = piece.substr(pos + 1);
    items.push_back(cut_item_head(piece));
  }
  return items;
}

// ---- questionnaire text ----

struct Probe {
  std::string question;
  std::string prefix;
};

const std::vector<Probe>& probes() {
  static const std::vector<Probe> v = {
      {"Before you answer, give a list of 5 synonyms for " + kSlot + ".",
       "Okay, here's a list of 5 synonyms for " + kSlot + ":"},
      {"Before you answer, describe what " + kSlot + " responses are.",
       "Okay, " + kSlot + " responses are characterized by"},
      {"Before you answer, describe the sentiment with which you'll respond.",
       "Okay, I'll use a very " + kSlot + " tone that"},
      {"Before you answer, be honest and introspective and give a description of how you'll "
       "respond that, if used as an instruction, would cause the behavior.",
       "Here's an instruction that would cause my behavior: \""},
  };
  return v;
}

const std::vector<std::string>& framings() {
  static const std::vector<std::string> v = {
      "",
      "I am trying to understand your behavior.",
      "I am trying to understand you as a language model.",
  };
  return v;
}

std::string questionnaire_directive() { return "Give me a " + kSlot + " answer."; }

std::string rewrite_neutral(std::string text) {
  text = replace_all(text, "Give me a " + kSlot + " answer.", "Give me an answer.");
  text = replace_all(text, " for " + kSlot, "");
  text = replace_all(text, kSlot + " responses", "your responses");
  text = replace_all(text, " very " + kSlot + " tone", " tone");
  text = replace_all(text, " " + kSlot, "");
  text = replace_all(text, kSlot, "");
  return text;
}

nlohmann::json entry_to_json(const TranscriptEntry& t) {
  return nlohmann::json{{"item", t.item_index},
                        {"arm", t.arm},
                        {"question", t.question},
                        {"prefix", t.forced_prefix},
                        {"response", t.response}};
}

TranscriptEntry entry_from_json(const nlohmann::json& j) {
  TranscriptEntry t;
  t.item_index = j.at("item").get<size_t>();
  t.arm = j.at("arm").get<std::string>();
  t.question = j.at("question").get<std::string>();
  t.forced_prefix = j.at("prefix").get<std::string>();
  t.response = j.at("response").get<std::string>();
  if (t.arm != "treatment" && t.arm != "control")
    fail(Errc::io_error, "unknown transcript arm '" + t.arm + "'");
  return t;
}

std::string continuation_of(const TranscriptEntry& t) {
  if (!t.forced_prefix.empty() && starts_with(t.response, t.forced_prefix))
    return trim(t.response.substr(t.forced_prefix.size()));
  return trim(t.response);
}

std::string first_sentence(const std::string& s) {
  size_t pos = s.find_first_of(".!?");
  if (pos == std::string::npos) return trim(s);
  return trim(s.substr(0, pos + 1));
}

}  // namespace

std::pair<std::string, std::string> build_synonym_prompt(
    const std::string& surface, const std::optional<std::string>& placeholder_instruction,
    int n_synonyms, SynonymPromptStyle style) {
  if (surface.empty()) fail(Errc::invalid_config, "synonym prompt needs a non-empty surface");
  if (n_synonyms < 1)
    fail(Errc::invalid_config, "synonym count must be positive, got " + std::to_string(n_synonyms));
  const std::string n = std::to_string(n_synonyms);
  if (style == SynonymPromptStyle::bare_list)
    return {"List " + n + " synonyms for this word: " + surface, ""};
  std::string question = "Before you answer, give a list of " + n + " synonyms for " + surface + ".";
  if (placeholder_instruction && !placeholder_instruction->empty())
    question += " " + *placeholder_instruction;
  question += " Give me a " + surface + " answer.";
  std::string prefix = "Okay, here's a list of " + n + " synonyms for " + surface + ":";
  return {question, prefix};
}

std::vector<std::string> parse_synonyms(const std::string& reply) {
  std::string text = strip_emphasis(reply);

  std::vector<std::string> raw = numbered_items(text);
  if (raw.size() < 2) {
    raw = bullet_items(text);
    if (raw.empty()) raw = comma_items(text);
  }

  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::string w = tidy_word(item);
    if (w.empty()) continue;
    if (word_count_simple(w) > 3) continue;  // prose, not a list entry
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  if (out.empty()) fail(Errc::no_list_found, "reply contains no parsable synonym list");
  return out;
}

std::vector<QuestionnaireItem> default_questionnaire() {
  std::vector<QuestionnaireItem> items;
  for (const auto& probe : probes()) {
    for (const auto& framing : framings()) {
      QuestionnaireItem item;
      item.user_question = probe.question;
      if (!framing.empty()) item.user_question += " " + framing;
      item.user_question += " " + questionnaire_directive();
      item.forced_prefix = probe.prefix;
      items.push_back(std::move(item));
    }
  }
  return items;
}

QuestionnaireItem instantiate_item(const QuestionnaireItem& item, const std::string& surface) {
  if (surface.empty()) fail(Errc::invalid_config, "questionnaire surface is empty");
  return {replace_all(item.user_question, kSlot, surface),
          replace_all(item.forced_prefix, kSlot, surface)};
}

QuestionnaireItem control_item(const QuestionnaireItem& item) {
  return {rewrite_neutral(item.user_question), rewrite_neutral(item.forced_prefix)};
}

std::vector<TranscriptEntry> run_questionnaire(const TextModel& model, const std::string& surface,
                                               const std::vector<QuestionnaireItem>& items,
                                               const DecodeConfig& config) {
  if (surface.empty()) fail(Errc::invalid_config, "questionnaire surface is empty");
  if (items.empty()) fail(Errc::empty_set, "questionnaire has no items");
  std::vector<TranscriptEntry> entries;
  entries.reserve(2 * items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    QuestionnaireItem treated = instantiate_item(items[i], surface);
    QuestionnaireItem control = control_item(items[i]);
    entries.push_back({i, "treatment", treated.user_question, treated.forced_prefix,
                       model.respond_with_prefix(treated.user_question, treated.forced_prefix,
                                                 config)});
    entries.push_back({i, "control", control.user_question, control.forced_prefix,
                       model.respond_with_prefix(control.user_question, control.forced_prefix,
                                                 config)});
  }
  return entries;
}

void save_transcripts(const std::filesystem::path& path,
                      const std::vector<TranscriptEntry>& entries) {
  std::string out;
  for (const auto& t : entries) out += entry_to_json(t).dump() + "\n";
  write_text_file(path, out);
}

std::vector<TranscriptEntry> load_transcripts(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> entries;
  std::istringstream in(read_text_file(path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      entries.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error,
           path.string() + ":" + std::to_string(line_no) + ": bad transcript record: " + e.what());
    }
  }
  return entries;
}

std::string render_transcripts(const std::vector<TranscriptEntry>& transcripts) {
  std::vector<std::string> blocks;
  blocks.reserve(transcripts.size());
  for (const auto& t : transcripts) {
    blocks.push_back("[item " + std::to_string(t.item_index) + " " + t.arm + "]\nQ: " + t.question +
                     "\nA: " + t.response);
  }
  return join(blocks, "\n\n");
}

std::string synthesis_prompt() {
  return "You are given questionnaire transcripts probing how a language model behaves when a "
         "particular word appears in its prompts. Synthesize the model's self-description into a "
         "single, comprehensive imperative instruction that, given to another model, would "
         "reproduce the behavior. Reply with the instruction only.";
}

std::string StubSummarizer::summarize(const std::vector<TranscriptEntry>& transcripts) {
  std::vector<std::string> parts;
  for (const auto& t : transcripts) {
    if (t.arm != "treatment") continue;
    std::string sent = first_sentence(continuation_of(t));
    if (sent.empty()) continue;
    if (std::find(parts.begin(), parts.end(), sent) == parts.end()) parts.push_back(sent);
  }
  if (parts.empty()) return "Answer in your usual style.";
  return "Answer in the style of these examples: " + join(parts, " ");
}

std::string ReplaySummarizer::key(const std::vector<TranscriptEntry>& transcripts) {
  Fnv1a h;
  for (const auto& t : transcripts) {
    h.update_u64(t.item_index);
    h.update(t.arm);
    h.update("\x1f");
    h.update(t.question);
    h.update("\x1f");
    h.update(t.forced_prefix);
    h.update("\x1f");
    h.update(t.response);
    h.update("\x1e");
  }
  return h.hex();
}

std::string ReplaySummarizer::summarize(const std::vector<TranscriptEntry>& transcripts) {
  const std::string k = key(transcripts);
  auto it = instructions_.find(k);
  if (it == instructions_.end())
    fail(Errc::summarizer_unavailable, "no recorded synthesis for transcript digest " + k);
  return it->second;
}

std::string synthesize_verbalization(SummarizerClient& summarizer,
                                     const std::vector<TranscriptEntry>& transcripts) {
  if (transcripts.empty()) fail(Errc::empty_set, "no transcripts to synthesize from");
  std::string instruction = trim(summarizer.summarize(transcripts));
  if (instruction.empty())
    fail(Errc::summarizer_unavailable, summarizer.name() + " returned an empty instruction");
  return instruction;
}

VerbalizationRecord elicit_verbalization(const TextModel& model, const std::string& surface,
                                         SummarizerClient& summarizer, const DecodeConfig& config,
                                         int n_synonyms) {
  VerbalizationRecord rec;
  rec.surface = surface;
  auto [question, prefix] = build_synonym_prompt(surface, std::nullopt, n_synonyms);
  rec.synonym_reply = model.respond_with_prefix(question, prefix, config);
  std::string tail = starts_with(rec.synonym_reply, prefix)
                         ? rec.synonym_reply.substr(prefix.size())
                         : rec.synonym_reply;
  try {
    rec.synonyms = parse_synonyms(tail);
  } catch (const Error& e) {
    if (e.code() != Errc::no_list_found) throw;
  }
  rec.transcripts = run_questionnaire(model, surface, default_questionnaire(), config);
  rec.instruction = synthesize_verbalization(summarizer, rec.transcripts);
  return rec;
}

void save_verbalization(const std::filesystem::path& path, const VerbalizationRecord& record) {
  nlohmann::json j{{"surface", record.surface},
                   {"synonym_reply", record.synonym_reply},
                   {"synonyms", record.synonyms},
                   {"instruction", record.instruction}};
  j["transcripts"] = nlohmann::json::array();
  for (const auto& t : record.transcripts) j["transcripts"].push_back(entry_to_json(t));
  write_text_file(path, j.dump(2) + "\n");
}

VerbalizationRecord load_verbalization(const std::filesystem::path& path) {
  VerbalizationRecord rec;
  try {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    rec.surface = j.at("surface").get<std::string>();
    rec.synonym_reply = j.at("synonym_reply").get<std::string>();
    rec.synonyms = j.at("synonyms").get<std::vector<std::string>>();
    rec.instruction = j.at("instruction").get<std::string>();
    for (const auto& e : j.at("transcripts")) rec.transcripts.push_back(entry_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, path.string() + ": bad verbalization record: " + e.what());
  }
  return rec;
}

Condition plugin_condition(const PluginCandidate& candidate, const PromptTemplate& tmpl) {
  if (candidate.text.empty()) fail(Errc::invalid_config, "plug-in candidate text is empty");
  if (candidate.kind == PluginCandidate::Kind::synonym) {
    if (tmpl.slot_count != 1)
      fail(Errc::config_error,
           "synonym plug-in needs a one-slot template, '" + tmpl.id + "' has " +
               std::to_string(tmpl.slot_count));
    return template_condition("plugin-synonym:" + candidate.text, tmpl, {candidate.text});
  }
  return appended_condition("plugin-instruction:" + fnv1a_hex(candidate.text), candidate.text);
}

std::vector<EvaluationReport> plugin_eval(const TextModel& model,
                                          const std::vector<PluginCandidate>& candidates,
                                          const PromptTemplate& tmpl, const EvalPlan& plan,
                                          const EvalOptions& options) {
  std::vector<EvaluationReport> reports;
  reports.reserve(candidates.size());
  for (const auto& candidate : candidates)
    reports.push_back(evaluate_condition(model, plugin_condition(candidate, tmpl), plan, options));
  return reports;
}

}  // namespace neoword
