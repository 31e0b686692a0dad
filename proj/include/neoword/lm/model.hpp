// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neoword/vocab.hpp"

namespace neoword {

// Turn-marker scheme for chat-formatted prompts. A user turn is rendered as
// user_open + text + user_close, a model turn as model_open + text +
// model_close.
struct ChatMarkers {
  std::string user_open;
  std::string user_close;
  std::string model_open;
  std::string model_close;

  static ChatMarkers gemma() {
    return {"<start_of_turn>user\n", "<end_of_turn>\n", "<start_of_turn>model\n",
            "<end_of_turn>\n"};
  }
  static ChatMarkers none() { return {"", "", "", ""}; }
};

struct DecodeConfig {
  enum class Strategy { greedy, sample };
  Strategy strategy = Strategy::greedy;
  size_t max_new_tokens = 48;
  double temperature = 1.0;  // sampling only, must be > 0
  uint64_t seed = 0;
  // Generation stops before emitting this id (typically the close marker).
  std::optional<size_t> stop_token;

  static DecodeConfig greedy_tokens(size_t n) {
    DecodeConfig c;
    c.max_new_tokens = n;
    return c;
  }
  static DecodeConfig sampled(size_t n, double temp, uint64_t seed) {
    DecodeConfig c;
    c.strategy = Strategy::sample;
    c.max_new_tokens = n;
    c.temperature = temp;
    c.seed = seed;
    return c;
  }
};

// Shape and pretraining knobs for the tiny decoder-only transformer.
struct ReferenceModelConfig {
  int d = 32;
  int layers = 2;
  int heads = 2;
  int ff_mult = 4;
  int context_len = 96;
  uint64_t seed = 1;

  int pretrain_steps = 0;  // 0 = random-init body, no corpus fitting
  int pretrain_batch = 16;
  double pretrain_lr = 3e-3;

  void validate() const;  // throws InvalidConfig
  std::string cache_key() const;
};

struct LayerParams {
  Vector ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix wq, wk, wv, wo;  // d x d, applied as x * W
  Matrix w1;              // d x ff
  Vector b1;              // ff
  Matrix w2;              // ff x d
  Vector b2;              // d
};

// Frozen network parameters: everything except the embedding table.
struct BodyParams {
  ReferenceModelConfig config;
  Matrix pos;  // context_len x d
  std::vector<LayerParams> layers;
  Vector lnf_g, lnf_b;
  Matrix head;    // base_size x d (output support is the base vocabulary only)
  Vector head_b;  // base_size

  uint64_t checksum() const;
};

// A frozen model plus its (possibly trained) embedding table. Copies share
// the body; training replaces neologism rows in a fresh handle.
class ModelHandle {
 public:
  ModelHandle() = default;
  ModelHandle(std::shared_ptr<const BodyParams> body,
              std::shared_ptr<const ExpandedVocabulary> vocab, Matrix embeddings,
              ChatMarkers markers);

  const BodyParams& body() const { return *body_; }
  const ExpandedVocabulary& vocab() const { return *vocab_; }
  const Matrix& embeddings() const { return embeddings_; }
  const ChatMarkers& markers() const { return markers_; }
  size_t base_size() const { return vocab_->base_size(); }
  std::shared_ptr<const BodyParams> body_ptr() const { return body_; }
  std::shared_ptr<const ExpandedVocabulary> vocab_ptr() const { return vocab_; }

  // New handle with the given neologism rows; base rows must stay put, so
  // only ids >= base_size are accepted (NotANeologismRow otherwise).
  ModelHandle with_rows(const std::map<size_t, Vector>& rows) const;
  ModelHandle with_embeddings(Matrix embeddings) const;

  std::vector<size_t> encode_text(std::string_view text) const;
  std::string decode_ids(const std::vector<size_t>& ids) const;
  std::string chat_prompt(std::string_view user_text) const;
  // Close-marker token when it encodes to a single id; generation stops there.
  std::optional<size_t> close_token() const;

  // Hash over body parameters and base embedding rows (the frozen set).
  uint64_t frozen_checksum() const;
  // Hash over everything including neologism rows.
  uint64_t parameter_checksum() const;

 private:
  std::shared_ptr<const BodyParams> body_;
  std::shared_ptr<const ExpandedVocabulary> vocab_;
  std::shared_ptr<const LongestMatchTokenizer> tokenizer_;
  Matrix embeddings_;
  ChatMarkers markers_;
};

// String-level model contract used by evaluation and verbalization; admits
// external frozen models that cannot expose gradients.
class TextModel {
 public:
  virtual ~TextModel() = default;
  virtual std::string name() const = 0;
  virtual std::string respond(const std::string& user_text, const DecodeConfig& config) const = 0;
  // Returns forced_prefix + continuation (the full model turn text).
  virtual std::string respond_with_prefix(const std::string& user_text,
                                          const std::string& forced_prefix,
                                          const DecodeConfig& config) const = 0;
  // Total log-probability in nats of `response` as the model turn for
  // `user_text`; adapters without likelihood access may throw.
  virtual double response_logprob(const std::string& user_text,
                                  const std::string& response) const = 0;
};

}  // namespace neoword
