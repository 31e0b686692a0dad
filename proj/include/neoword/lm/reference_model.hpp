// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <utility>

#include "neoword/lm/model.hpp"

namespace neoword {

// Pretrains the tiny decoder-only transformer on token-id sequences drawn
// from the base vocabulary, then expands the embedding table with the
// registered neologisms. Bit-deterministic given (config, vocab, corpus).
ModelHandle build_reference_model(const ReferenceModelConfig& config,
                                  std::shared_ptr<const ExpandedVocabulary> vocab,
                                  const std::vector<std::vector<size_t>>& corpus,
                                  ChatMarkers markers);

// Total and per-token log-probability (nats) of response_ids following
// prompt_ids. Response ids must lie in the base vocabulary.
std::pair<double, std::vector<double>> sequence_logprob(const ModelHandle& model,
                                                        const std::vector<size_t>& prompt_ids,
                                                        const std::vector<size_t>& response_ids);

// Total response log-probability plus its gradient with respect to the full
// embedding table. Only rows appearing in the token sequence receive mass.
std::pair<double, Matrix> sequence_logprob_grad(const ModelHandle& model,
                                                const std::vector<size_t>& prompt_ids,
                                                const std::vector<size_t>& response_ids);

// Next-token logits over the base vocabulary after consuming `ids`.
Vector next_token_logits(const ModelHandle& model, const std::vector<size_t>& ids);

// Decodes from the model. Emitted ids always lie in the base vocabulary (the
// output head has no neologism rows). Stops at config.stop_token, which is
// not included in the result.
std::vector<size_t> generate(const ModelHandle& model, const std::vector<size_t>& prompt_ids,
                             const DecodeConfig& config);

// Chat-wrapped generation: encodes user_open+text+user_close+model_open and
// decodes until the close marker. Returns the response text.
std::string respond(const ModelHandle& model, std::string_view user_text,
                    const DecodeConfig& config);

// Same, but the model turn starts with forced_model_prefix verbatim; returns
// the full model turn text (prefix + continuation).
std::string forced_prefix_generate(const ModelHandle& model, std::string_view user_text,
                                   std::string_view forced_model_prefix,
                                   const DecodeConfig& config);

// Gradient of a scalar loss of the embedding table, restricted to the listed
// neologism rows. `loss` must accept any embedding matrix of the model's
// shape. Rows below base size raise NotANeologismRow. The finite-difference
// fallback inside tests uses the same entry point.
struct EmbeddingLoss {
  virtual ~EmbeddingLoss() = default;
  virtual double value(const Matrix& embeddings) const = 0;
  // Adds dL/dE into grad (same shape as the table).
  virtual void add_gradient(const Matrix& embeddings, Matrix& grad) const = 0;
};

std::map<size_t, Vector> loss_gradient_new_rows(const ModelHandle& model,
                                                const EmbeddingLoss& loss,
                                                const std::vector<size_t>& new_row_ids);

// Binary model artifact (config, markers, vocabulary, body, embeddings).
void save_model(const std::filesystem::path& path, const ModelHandle& model);
ModelHandle load_model(const std::filesystem::path& path);

// TextModel over a reference handle.
class ReferenceTextModel : public TextModel {
 public:
  ReferenceTextModel(ModelHandle handle, std::string name)
      : handle_(std::move(handle)), name_(std::move(name)) {}

  const ModelHandle& handle() const { return handle_; }
  std::string name() const override { return name_; }
  std::string respond(const std::string& user_text, const DecodeConfig& config) const override;
  std::string respond_with_prefix(const std::string& user_text, const std::string& forced_prefix,
                                  const DecodeConfig& config) const override;
  double response_logprob(const std::string& user_text,
                          const std::string& response) const override;

 private:
  ModelHandle handle_;
  std::string name_;
};

}  // namespace neoword
