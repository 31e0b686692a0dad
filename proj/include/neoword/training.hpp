// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <vector>

#include "neoword/dataset.hpp"
#include "neoword/lm/reference_model.hpp"
#include "neoword/util.hpp"

namespace neoword {

enum class LossKind { nll, apo_up };
enum class ApoSign { as_printed, standard_dpo };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from(const std::string& name);
const char* apo_sign_name(ApoSign s);
ApoSign apo_sign_from(const std::string& name);

struct TrainConfig {
  LossKind loss = LossKind::apo_up;
  double beta = 0.1;
  double lambda_h = 0.0;  // 0.1 turns on the norm hinge
  ApoSign apo_sign = ApoSign::as_printed;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int steps = 100;
  int batch_size = 8;
  uint64_t seed = 0;
  int step_multiplier = 1;  // multi-template runs train longer

  void validate() const;
  static TrainConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  std::string checksum() const;
};

struct TrainResult {
  std::map<size_t, Vector> rows;    // neologism id -> trained embedding row
  std::vector<double> loss_history;  // one entry per optimizer step
  std::map<size_t, double> final_norms;
  std::string config_checksum;
};

void save_train_result(const std::filesystem::path& path, const TrainResult& result);
TrainResult load_train_result(const std::filesystem::path& path);

// ---- losses ----

// -log p(chosen | instruction), chat-wrapped, in nats.
double nll_loss(const ModelHandle& model, const PreferenceExample& example);

// -log sigmoid(beta*[lp(yc)-lp(yr)] + sign*beta*[lp0(yc)-lp0(yr)])
// -log sigmoid(beta*[lp(yc)-lp0(yc)])
// where lp0 comes from `reference` (the untrained handle) and sign is +1 for
// as_printed, -1 for standard_dpo.
double apo_up_loss(const ModelHandle& model, const ModelHandle& reference,
                   const PreferenceExample& example, double beta, ApoSign sign);

// lambda_h * max(||row||_2 - 1, 0)
double hinge_norm_penalty(const Vector& row, double lambda_h);

// Scalar helpers shared by losses and tests.
double stable_softplus(double x);            // log(1 + e^x)
double stable_neg_log_sigmoid(double z);     // -log sigmoid(z) = softplus(-z)
double sigmoid(double z);

// Chat-wrapped token ids for an example under a model's markers.
struct EncodedExample {
  std::vector<size_t> prompt_ids;    // user turn + model-open marker
  std::vector<size_t> chosen_ids;    // chosen + model-close marker
  std::vector<size_t> rejected_ids;  // rejected + model-close marker
};
EncodedExample encode_example(const ModelHandle& model, const PreferenceExample& example);

// Differentiable data term for one example, over the embedding table. The
// model reference must outlive the loss object.
class PreferenceLoss : public EmbeddingLoss {
 public:
  // For nll, `reference` is ignored and may be the model itself.
  PreferenceLoss(const ModelHandle& model, const ModelHandle& reference,
                 const PreferenceExample& example, LossKind kind, double beta, ApoSign sign);

  double value(const Matrix& embeddings) const override;
  void add_gradient(const Matrix& embeddings, Matrix& grad) const override;

 private:
  const ModelHandle* model_;
  EncodedExample ids_;
  LossKind kind_;
  double beta_;
  ApoSign sign_;
  double ref_chosen_ = 0;    // lp0(yc)
  double ref_rejected_ = 0;  // lp0(yr)
};

// Norm hinge over the given rows.
class HingeLoss : public EmbeddingLoss {
 public:
  HingeLoss(std::vector<size_t> rows, double lambda_h);
  double value(const Matrix& embeddings) const override;
  void add_gradient(const Matrix& embeddings, Matrix& grad) const override;

 private:
  std::vector<size_t> rows_;
  double lambda_;
};

class SumLoss : public EmbeddingLoss {
 public:
  explicit SumLoss(std::vector<const EmbeddingLoss*> parts) : parts_(std::move(parts)) {}
  double value(const Matrix& embeddings) const override;
  void add_gradient(const Matrix& embeddings, Matrix& grad) const override;

 private:
  std::vector<const EmbeddingLoss*> parts_;
};

// Seeded epoch permutation, reused every epoch; weights never affect
// sampling (they scale the loss instead).
class WeightedBatchSampler {
 public:
  WeightedBatchSampler(size_t dataset_size, size_t batch_size, uint64_t seed);

  size_t batches_per_epoch() const;
  std::vector<size_t> batch(size_t index) const;  // index < batches_per_epoch
  std::vector<size_t> next_batch();

 private:
  std::vector<size_t> perm_;
  size_t batch_size_;
  size_t cursor_ = 0;
};

// Gradient descent on the registered neologism rows only; everything else is
// bit-frozen. Loss per step: (1/B) * sum_i w_i * l_i + hinge over all rows.
TrainResult train_neologisms(const ModelHandle& model,
                             const std::vector<PreferenceExample>& dataset,
                             const TrainConfig& config);

// Handle with the trained rows installed.
ModelHandle apply_train_result(const ModelHandle& model, const TrainResult& result);

}  // namespace neoword
