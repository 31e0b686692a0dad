// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "neoword/lm/model.hpp"
#include "neoword/lm/reference_model.hpp"
#include "neoword/lm/tiny_lang.hpp"
#include "neoword/util.hpp"
#include "neoword/vocab.hpp"

namespace neoword::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(NEOWORD_FIXTURE_DIR) / name;
}

// Fresh empty directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("neoword-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Text model with canned replies: exact question matches first, otherwise a
// deterministic echo. respond_with_prefix always leads with the prefix.
class ScriptedModel : public TextModel {
 public:
  explicit ScriptedModel(std::map<std::string, std::string> replies = {})
      : replies_(std::move(replies)) {}

  std::string name() const override { return "scripted"; }

  std::string respond(const std::string& user_text, const DecodeConfig&) const override {
    auto it = replies_.find(user_text);
    if (it != replies_.end()) return it->second;
    return "echo:" + fnv1a_hex(user_text).substr(0, 8);
  }

  std::string respond_with_prefix(const std::string& user_text, const std::string& forced_prefix,
                                  const DecodeConfig& config) const override {
    return forced_prefix + " " + respond(user_text, config);
  }

  double response_logprob(const std::string& user_text,
                          const std::string& response) const override {
    return -0.1 * static_cast<double>(user_text.size() + response.size());
  }

 private:
  std::map<std::string, std::string> replies_;
};

// Handle whose output head is all zeros: every next-token distribution is
// uniform over the base vocabulary, whatever the embeddings hold.
inline ModelHandle uniform_handle(std::vector<std::string> surfaces,
                                  std::vector<NeologismSpec> specs = {}, int d = 8,
                                  uint64_t seed = 3, ChatMarkers markers = ChatMarkers::none()) {
  ReferenceModelConfig config;
  config.d = d;
  config.layers = 1;
  config.heads = 1;
  config.ff_mult = 2;
  config.context_len = 32;
  config.seed = seed;
  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(Vocabulary(std::move(surfaces)), std::move(specs)));

  Rng rng(seed);
  auto fill_vec = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal() * 0.1;
    return v;
  };
  auto fill_mat = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal() * 0.1;
    return m;
  };

  auto body = std::make_shared<BodyParams>();
  body->config = config;
  body->pos = fill_mat(config.context_len, d);
  for (int l = 0; l < config.layers; ++l) {
    LayerParams layer;
    layer.ln1_g = Vector::Ones(d);
    layer.ln1_b = Vector::Zero(d);
    layer.ln2_g = Vector::Ones(d);
    layer.ln2_b = Vector::Zero(d);
    layer.wq = fill_mat(d, d);
    layer.wk = fill_mat(d, d);
    layer.wv = fill_mat(d, d);
    layer.wo = fill_mat(d, d);
    layer.w1 = fill_mat(d, d * config.ff_mult);
    layer.b1 = fill_vec(d * config.ff_mult);
    layer.w2 = fill_mat(d * config.ff_mult, d);
    layer.b2 = fill_vec(d);
    body->layers.push_back(std::move(layer));
  }
  body->lnf_g = Vector::Ones(d);
  body->lnf_b = Vector::Zero(d);
  body->head = Matrix::Zero(static_cast<Eigen::Index>(vocab->base_size()), d);
  body->head_b = Vector::Zero(static_cast<Eigen::Index>(vocab->base_size()));

  Matrix embeddings = fill_mat(static_cast<Eigen::Index>(vocab->size()), d);
  return ModelHandle(std::move(body), std::move(vocab), std::move(embeddings),
                     std::move(markers));
}

// Small pretrained handle over the synthetic language; cheap enough to
// rebuild wherever a test needs one.
inline ModelHandle small_pretrained_model(std::vector<NeologismSpec> specs) {
  ReferenceModelConfig config;
  config.d = 16;
  config.layers = 1;
  config.heads = 2;
  config.ff_mult = 2;
  config.context_len = 64;
  config.seed = 9;
  config.pretrain_steps = 80;
  config.pretrain_batch = 8;
  config.pretrain_lr = 3e-3;
  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(tiny_lang::base_vocabulary(), std::move(specs)));
  tiny_lang::CorpusConfig cc;
  cc.seed = 2;
  cc.docs = 96;
  auto corpus = tiny_lang::encode_corpus(tiny_lang::build_corpus(cc), vocab->base());
  return build_reference_model(config, vocab, corpus, tiny_lang::markers());
}

}  // namespace neoword::testing
