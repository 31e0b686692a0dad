// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neoword/lm/model.hpp"
#include "neoword/util.hpp"
#include "neoword/vocab.hpp"

namespace neoword {

// A synthetic instruction-following language small enough for the reference
// transformer to master. Instructions ask about made-up topic words; plain
// instructions get a one-clause answer, and a trailing directive ("Give me a
// brief answer." / "Give me a zappy answer.") switches the response style.
namespace tiny_lang {

// Single printable-ASCII characters and newline, word tokens with their
// leading spaces, and the turn markers.
Vocabulary base_vocabulary();

ChatMarkers markers();  // "<u>" ... " </u>", " <m>" ... " </m>"

// The 24 topic words, each carrying its leading space (" bazo", ...).
const std::vector<std::string>& topic_words();

// Cue words that trigger styled responses when placed in the directive slot.
std::string brief_cue();  // " brief"
std::string zappy_cue();  // " zappy"

std::string instruction(const std::vector<std::string>& topics);

// Response rules; `rng` drives filler-word choices.
std::string default_response(const std::vector<std::string>& topics, Rng& rng);
std::string brief_response(const std::vector<std::string>& topics, Rng& rng);
std::string zappy_response(const std::vector<std::string>& topics, Rng& rng);

// Topic words found in a piece of text, in order of appearance.
std::vector<std::string> topics_in(const std::string& text);

enum class DocKind { plain, brief, zappy };

struct Doc {
  DocKind kind = DocKind::plain;
  std::string instruction;  // includes the directive for styled docs
  std::string response;
};

struct CorpusConfig {
  uint64_t seed = 1;
  size_t docs = 3000;
  double brief_fraction = 0.25;
  double zappy_fraction = 0.25;
};

// Deterministic corpus over a topic split: docs draw topics from the training
// pool only, so held-out topic combinations stay unseen.
std::vector<Doc> build_corpus(const CorpusConfig& config);

// Full document text: "<u>" + instruction + " </u> <m>" + response + " </m>".
std::string render_doc(const Doc& doc);

// Rendered docs encoded with the base tokenizer.
std::vector<std::vector<size_t>> encode_corpus(const std::vector<Doc>& docs,
                                               const Vocabulary& vocab);

// Deterministic instruction pools for experiments; `heldout` combinations
// never appear in build_corpus output.
std::vector<std::string> train_instructions(size_t count, uint64_t seed);
std::vector<std::string> heldout_instructions(size_t count, uint64_t seed);

}  // namespace tiny_lang

}  // namespace neoword
