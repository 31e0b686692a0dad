// SPDX-License-Identifier: Apache-2.0
#include "neoword/lm/tiny_lang.hpp"

#include <algorithm>

#include "neoword/errors.hpp"

namespace neoword {
namespace tiny_lang {

namespace {

const std::vector<std::string>& word_tokens() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w = {
        "<u>",   " </u>", " <m>",  " </m>",  " tell",  " me",    " about", " the",
        " is",   " a",    " an",   " and",   " not",   " Give",  " answer", " brief",
        " zappy", " zap",  " yes",  " no",
    };
    for (const std::string& t : topic_words()) w.push_back(t);
    return w;
  }();
  return words;
}

// Topic pairs with (i * 24 + j) % 5 == 0 are reserved for held-out
// instructions and never drawn for the corpus or the training pool.
bool heldout_pair(size_t i, size_t j) { return (i * 24 + j) % 5 == 0; }

std::vector<std::string> draw_topics(Rng& rng, bool heldout) {
  const auto& topics = topic_words();
  bool pair = rng.uniform() < 0.6;
  if (!pair && !heldout) {
    return {topics[rng.uniform_int(topics.size())]};
  }
  while (true) {
    size_t i = rng.uniform_int(topics.size());
    size_t j = rng.uniform_int(topics.size());
    if (i == j) continue;
    if (heldout_pair(i, j) == heldout) return {topics[i], topics[j]};
  }
}

std::string filler_word(Rng& rng) {
  const auto& topics = topic_words();
  if (rng.uniform() < 0.02) return " zap";
  return topics[rng.uniform_int(topics.size())];
}

}  // namespace

Vocabulary base_vocabulary() {
  std::vector<std::string> surfaces;
  for (int c = 32; c <= 126; ++c) surfaces.push_back(std::string(1, static_cast<char>(c)));
  surfaces.push_back("\n");
  for (const std::string& w : word_tokens()) surfaces.push_back(w);
  return Vocabulary(std::move(surfaces));
}

ChatMarkers markers() { return {"<u>", " </u>", " <m>", " </m>"}; }

const std::vector<std::string>& topic_words() {
  static const std::vector<std::string> topics = [] {
    const char* starts[] = {"b", "d", "f", "g", "k", "l", "m", "n"};
    const char* vowels[] = {"a", "e", "i"};
    std::vector<std::string> out;
    for (const char* s : starts)
      for (const char* v : vowels) out.push_back(std::string(" ") + s + v + "zo");
    return out;
  }();
  return topics;
}

std::string brief_cue() { return " brief"; }
std::string zappy_cue() { return " zappy"; }

std::string instruction(const std::vector<std::string>& topics) {
  std::string out = " tell me about";
  for (const std::string& t : topics) out += t;
  out += "?";
  return out;
}

std::string default_response(const std::vector<std::string>& topics, Rng& rng) {
  std::string out = " the" + topics.front() + " is";
  size_t fillers = 5 + rng.uniform_int(5);
  for (size_t i = 0; i < fillers; ++i) out += filler_word(rng);
  out += ".";
  return out;
}

std::string brief_response(const std::vector<std::string>& topics, Rng& rng) {
  std::string out = topics.front();
  if (rng.uniform() < 0.5) out += filler_word(rng);
  out += ".";
  return out;
}

std::string zappy_response(const std::vector<std::string>& topics, Rng& rng) {
  std::string out;
  for (size_t i = 0; i < 8; ++i) out += rng.uniform() < 0.75 ? " zap" : filler_word(rng);
  out += ".";
  return out;
}

std::vector<std::string> topics_in(const std::string& text) {
  std::vector<std::pair<size_t, std::string>> hits;
  for (const std::string& t : topic_words()) {
    size_t pos = text.find(t);
    if (pos != std::string::npos) hits.emplace_back(pos, t);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::string> out;
  for (auto& [pos, t] : hits) out.push_back(t);
  return out;
}

std::vector<Doc> build_corpus(const CorpusConfig& config) {
  if (config.brief_fraction + config.zappy_fraction > 1.0)
    fail(Errc::invalid_config, "style fractions exceed 1");
  std::vector<Doc> docs;
  docs.reserve(config.docs);
  for (size_t i = 0; i < config.docs; ++i) {
    Rng rng(Rng::mix(config.seed, i));
    Doc doc;
    std::vector<std::string> topics = draw_topics(rng, /*heldout=*/false);
    double roll = rng.uniform();
    if (roll < config.brief_fraction) {
      doc.kind = DocKind::brief;
      doc.instruction = instruction(topics) + " Give me a brief answer.";
      doc.response = brief_response(topics, rng);
    } else if (roll < config.brief_fraction + config.zappy_fraction) {
      doc.kind = DocKind::zappy;
      doc.instruction = instruction(topics) + " Give me a zappy answer.";
      doc.response = zappy_response(topics, rng);
    } else {
      doc.kind = DocKind::plain;
      doc.instruction = instruction(topics);
      doc.response = default_response(topics, rng);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::string render_doc(const Doc& doc) {
  ChatMarkers m = markers();
  return m.user_open + doc.instruction + m.user_close + m.model_open + doc.response +
         m.model_close;
}

std::vector<std::vector<size_t>> encode_corpus(const std::vector<Doc>& docs,
                                               const Vocabulary& vocab) {
  LongestMatchTokenizer tok(vocab);
  std::vector<std::vector<size_t>> out;
  out.reserve(docs.size());
  for (const Doc& doc : docs) out.push_back(tok.encode(render_doc(doc)));
  return out;
}

std::vector<std::string> train_instructions(size_t count, uint64_t seed) {
  std::vector<std::string> out;
  for (size_t i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, 0x7261u) + i * 0x9e3779b97f4a7c15ull);
    out.push_back(instruction(draw_topics(rng, /*heldout=*/false)));
  }
  return out;
}

std::vector<std::string> heldout_instructions(size_t count, uint64_t seed) {
  std::vector<std::string> out;
  for (size_t i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, 0x6865u) + i * 0x9e3779b97f4a7c15ull);
    out.push_back(instruction(draw_topics(rng, /*heldout=*/true)));
  }
  return out;
}

}  // namespace tiny_lang
}  // namespace neoword
