// SPDX-License-Identifier: Apache-2.0
#include "neoword/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"

namespace neoword {

using nlohmann::json;

const char* loss_kind_name(LossKind k) { return k == LossKind::nll ? "nll" : "apo_up"; }

LossKind loss_kind_from(const std::string& name) {
  if (name == "nll") return LossKind::nll;
  if (name == "apo_up") return LossKind::apo_up;
  fail(Errc::config_error, "unknown loss: " + name);
}

const char* apo_sign_name(ApoSign s) {
  return s == ApoSign::as_printed ? "as_printed" : "standard_dpo";
}

ApoSign apo_sign_from(const std::string& name) {
  if (name == "as_printed") return ApoSign::as_printed;
  if (name == "standard_dpo") return ApoSign::standard_dpo;
  fail(Errc::config_error, "unknown apo_sign: " + name);
}

void TrainConfig::validate() const {
  if (beta <= 0) fail(Errc::invalid_config, "beta must be positive");
  if (lambda_h < 0) fail(Errc::invalid_config, "lambda_h must be non-negative");
  if (learning_rate <= 0) fail(Errc::invalid_config, "learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) fail(Errc::invalid_config, "momentum must lie in [0, 1)");
  if (steps <= 0) fail(Errc::invalid_config, "steps must be positive");
  if (batch_size <= 0) fail(Errc::invalid_config, "batch_size must be positive");
  if (step_multiplier <= 0) fail(Errc::invalid_config, "step_multiplier must be positive");
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.loss = loss_kind_from(kv.get_or("loss", loss_kind_name(c.loss)));
  c.beta = kv.get_double("beta", c.beta);
  c.lambda_h = kv.get_double("lambda_h", c.lambda_h);
  c.apo_sign = apo_sign_from(kv.get_or("apo_sign", apo_sign_name(c.apo_sign)));
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.steps = static_cast<int>(kv.get_int("steps", c.steps));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(c.seed)));
  c.step_multiplier = static_cast<int>(kv.get_int("step_multiplier", c.step_multiplier));
  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("loss", loss_kind_name(loss));
  kv.set("beta", std::to_string(beta));
  kv.set("lambda_h", std::to_string(lambda_h));
  kv.set("apo_sign", apo_sign_name(apo_sign));
  kv.set("learning_rate", std::to_string(learning_rate));
  kv.set("momentum", std::to_string(momentum));
  kv.set("steps", std::to_string(steps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  kv.set("step_multiplier", std::to_string(step_multiplier));
  return kv;
}

std::string TrainConfig::checksum() const { return to_kv().checksum(); }

// ---- scalar helpers ----

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_neg_log_sigmoid(double z) { return stable_softplus(-z); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// ---- losses ----

EncodedExample encode_example(const ModelHandle& model, const PreferenceExample& example) {
  EncodedExample out;
  out.prompt_ids = model.encode_text(model.chat_prompt(example.instruction));
  out.chosen_ids = model.encode_text(example.chosen + model.markers().model_close);
  out.rejected_ids = model.encode_text(example.rejected + model.markers().model_close);
  return out;
}

double nll_loss(const ModelHandle& model, const PreferenceExample& example) {
  example.validate();
  EncodedExample ids = encode_example(model, example);
  return -sequence_logprob(model, ids.prompt_ids, ids.chosen_ids).first;
}

double apo_up_loss(const ModelHandle& model, const ModelHandle& reference,
                   const PreferenceExample& example, double beta, ApoSign sign) {
  example.validate();
  if (beta <= 0) fail(Errc::invalid_config, "beta must be positive");
  if (model.frozen_checksum() != reference.frozen_checksum())
    fail(Errc::model_mismatch, "policy and reference disagree on frozen parameters");
  EncodedExample ids = encode_example(model, example);
  double lp_c = sequence_logprob(model, ids.prompt_ids, ids.chosen_ids).first;
  double lp_r = sequence_logprob(model, ids.prompt_ids, ids.rejected_ids).first;
  double lp0_c = sequence_logprob(reference, ids.prompt_ids, ids.chosen_ids).first;
  double lp0_r = sequence_logprob(reference, ids.prompt_ids, ids.rejected_ids).first;
  double s = sign == ApoSign::as_printed ? 1.0 : -1.0;
  double z1 = beta * (lp_c - lp_r) + s * beta * (lp0_c - lp0_r);
  double z2 = beta * (lp_c - lp0_c);
  return stable_neg_log_sigmoid(z1) + stable_neg_log_sigmoid(z2);
}

double hinge_norm_penalty(const Vector& row, double lambda_h) {
  if (lambda_h < 0) fail(Errc::invalid_config, "lambda_h must be non-negative");
  return lambda_h * std::max(row.norm() - 1.0, 0.0);
}

PreferenceLoss::PreferenceLoss(const ModelHandle& model, const ModelHandle& reference,
                               const PreferenceExample& example, LossKind kind, double beta,
                               ApoSign sign)
    : model_(&model), kind_(kind), beta_(beta), sign_(sign) {
  example.validate();
  ids_ = encode_example(model, example);
  if (kind_ == LossKind::apo_up) {
    if (beta_ <= 0) fail(Errc::invalid_config, "beta must be positive");
    if (model.frozen_checksum() != reference.frozen_checksum())
      fail(Errc::model_mismatch, "policy and reference disagree on frozen parameters");
    ref_chosen_ = sequence_logprob(reference, ids_.prompt_ids, ids_.chosen_ids).first;
    ref_rejected_ = sequence_logprob(reference, ids_.prompt_ids, ids_.rejected_ids).first;
  }
}

double PreferenceLoss::value(const Matrix& embeddings) const {
  ModelHandle h = model_->with_embeddings(embeddings);
  double lp_c = sequence_logprob(h, ids_.prompt_ids, ids_.chosen_ids).first;
  if (kind_ == LossKind::nll) return -lp_c;
  double lp_r = sequence_logprob(h, ids_.prompt_ids, ids_.rejected_ids).first;
  double s = sign_ == ApoSign::as_printed ? 1.0 : -1.0;
  double z1 = beta_ * (lp_c - lp_r) + s * beta_ * (ref_chosen_ - ref_rejected_);
  double z2 = beta_ * (lp_c - ref_chosen_);
  return stable_neg_log_sigmoid(z1) + stable_neg_log_sigmoid(z2);
}

void PreferenceLoss::add_gradient(const Matrix& embeddings, Matrix& grad) const {
  ModelHandle h = model_->with_embeddings(embeddings);
  auto [lp_c, grad_c] = sequence_logprob_grad(h, ids_.prompt_ids, ids_.chosen_ids);
  if (kind_ == LossKind::nll) {
    grad -= grad_c;
    return;
  }
  auto [lp_r, grad_r] = sequence_logprob_grad(h, ids_.prompt_ids, ids_.rejected_ids);
  double s = sign_ == ApoSign::as_printed ? 1.0 : -1.0;
  double z1 = beta_ * (lp_c - lp_r) + s * beta_ * (ref_chosen_ - ref_rejected_);
  double z2 = beta_ * (lp_c - ref_chosen_);
  // d/dz softplus(-z) = -sigmoid(-z)
  double dl_dlpc = -beta_ * (sigmoid(-z1) + sigmoid(-z2));
  double dl_dlpr = beta_ * sigmoid(-z1);
  grad += dl_dlpc * grad_c + dl_dlpr * grad_r;
}

HingeLoss::HingeLoss(std::vector<size_t> rows, double lambda_h)
    : rows_(std::move(rows)), lambda_(lambda_h) {
  if (lambda_ < 0) fail(Errc::invalid_config, "lambda_h must be non-negative");
}

double HingeLoss::value(const Matrix& embeddings) const {
  double total = 0.0;
  for (size_t r : rows_) {
    if (r >= static_cast<size_t>(embeddings.rows()))
      fail(Errc::out_of_range, "hinge row out of range");
    total += lambda_ * std::max(embeddings.row(static_cast<Eigen::Index>(r)).norm() - 1.0, 0.0);
  }
  return total;
}

void HingeLoss::add_gradient(const Matrix& embeddings, Matrix& grad) const {
  for (size_t r : rows_) {
    if (r >= static_cast<size_t>(embeddings.rows()))
      fail(Errc::out_of_range, "hinge row out of range");
    Eigen::Index i = static_cast<Eigen::Index>(r);
    double n = embeddings.row(i).norm();
    if (n > 1.0) grad.row(i) += (lambda_ / n) * embeddings.row(i);
  }
}

double SumLoss::value(const Matrix& embeddings) const {
  double total = 0.0;
  for (const EmbeddingLoss* p : parts_) total += p->value(embeddings);
  return total;
}

void SumLoss::add_gradient(const Matrix& embeddings, Matrix& grad) const {
  for (const EmbeddingLoss* p : parts_) p->add_gradient(embeddings, grad);
}

// ---- batching ----

WeightedBatchSampler::WeightedBatchSampler(size_t dataset_size, size_t batch_size, uint64_t seed)
    : batch_size_(batch_size) {
  if (dataset_size == 0) fail(Errc::empty_dataset, "cannot sample from an empty dataset");
  if (batch_size == 0) fail(Errc::invalid_config, "batch_size must be positive");
  if (batch_size > dataset_size)
    fail(Errc::batch_too_large, "batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                                    std::to_string(dataset_size));
  perm_.resize(dataset_size);
  std::iota(perm_.begin(), perm_.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(perm_);
}

size_t WeightedBatchSampler::batches_per_epoch() const {
  return (perm_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<size_t> WeightedBatchSampler::batch(size_t index) const {
  if (index >= batches_per_epoch()) fail(Errc::out_of_range, "batch index out of range");
  size_t begin = index * batch_size_;
  size_t end = std::min(begin + batch_size_, perm_.size());
  return {perm_.begin() + static_cast<std::ptrdiff_t>(begin),
          perm_.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<size_t> WeightedBatchSampler::next_batch() {
  std::vector<size_t> out = batch(cursor_);
  cursor_ = (cursor_ + 1) % batches_per_epoch();
  return out;
}

// ---- training loop ----

TrainResult train_neologisms(const ModelHandle& model,
                             const std::vector<PreferenceExample>& dataset,
                             const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) fail(Errc::empty_dataset, "training needs at least one example");
  for (const PreferenceExample& ex : dataset) ex.validate();

  std::vector<size_t> new_rows;
  for (size_t k = 0; k < model.vocab().neologisms().size(); ++k)
    new_rows.push_back(model.vocab().base_size() + k);
  if (new_rows.empty()) fail(Errc::invalid_config, "model has no neologism rows to train");

  // The input handle is the frozen reference policy throughout.
  std::vector<PreferenceLoss> example_losses;
  example_losses.reserve(dataset.size());
  for (const PreferenceExample& ex : dataset)
    example_losses.emplace_back(model, model, ex, config.loss, config.beta, config.apo_sign);
  HingeLoss hinge(new_rows, config.lambda_h);

  Matrix emb = model.embeddings();
  std::map<size_t, Vector> velocity;
  for (size_t r : new_rows) velocity[r] = Vector::Zero(model.body().config.d);

  WeightedBatchSampler sampler(dataset.size(), static_cast<size_t>(config.batch_size),
                               config.seed);
  size_t total_steps = static_cast<size_t>(config.steps) * static_cast<size_t>(config.step_multiplier);

  TrainResult result;
  result.config_checksum = config.checksum();
  result.loss_history.reserve(total_steps);

  for (size_t step = 0; step < total_steps; ++step) {
    std::vector<size_t> batch = sampler.next_batch();
    double inv_b = 1.0 / static_cast<double>(batch.size());

    Matrix grad = Matrix::Zero(emb.rows(), emb.cols());
    double data_loss = 0.0;
    for (size_t idx : batch) {
      double w = dataset[idx].weight * inv_b;
      Matrix g = Matrix::Zero(emb.rows(), emb.cols());
      example_losses[idx].add_gradient(emb, g);
      grad += w * g;
      data_loss += w * example_losses[idx].value(emb);
    }
    double step_loss = data_loss;
    if (config.lambda_h > 0) {
      step_loss += hinge.value(emb);
      hinge.add_gradient(emb, grad);
    }
    if (!std::isfinite(step_loss))
      fail(Errc::diverged_loss, "non-finite loss at step " + std::to_string(step));
    result.loss_history.push_back(step_loss);

    for (size_t r : new_rows) {
      Eigen::Index i = static_cast<Eigen::Index>(r);
      Vector& v = velocity[r];
      v = config.momentum * v - config.learning_rate * grad.row(i).transpose();
      emb.row(i) += v.transpose();
    }
  }

  for (size_t r : new_rows) {
    Eigen::Index i = static_cast<Eigen::Index>(r);
    result.rows[r] = emb.row(i).transpose();
    result.final_norms[r] = emb.row(i).norm();
  }
  return result;
}

ModelHandle apply_train_result(const ModelHandle& model, const TrainResult& result) {
  return model.with_rows(result.rows);
}

// ---- artifact io ----

void save_train_result(const std::filesystem::path& path, const TrainResult& result) {
  json rec;
  rec["version"] = 1;
  rec["config_checksum"] = result.config_checksum;
  json rows = json::object();
  for (const auto& [id, row] : result.rows) {
    std::vector<double> vals(row.data(), row.data() + row.size());
    rows[std::to_string(id)] = vals;
  }
  rec["rows"] = rows;
  rec["loss_history"] = result.loss_history;
  json norms = json::object();
  for (const auto& [id, n] : result.final_norms) norms[std::to_string(id)] = n;
  rec["final_norms"] = norms;
  write_text_file(path, rec.dump(2) + "\n");
}

TrainResult load_train_result(const std::filesystem::path& path) {
  json rec;
  try {
    rec = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(Errc::io_error, "bad train result file: " + std::string(e.what()));
  }
  TrainResult result;
  result.config_checksum = rec.at("config_checksum").get<std::string>();
  for (const auto& [key, vals] : rec.at("rows").items()) {
    std::vector<double> v = vals.get<std::vector<double>>();
    Vector row(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) row(static_cast<Eigen::Index>(i)) = v[i];
    result.rows[std::stoull(key)] = std::move(row);
  }
  result.loss_history = rec.at("loss_history").get<std::vector<double>>();
  for (const auto& [key, n] : rec.at("final_norms").items())
    result.final_norms[std::stoull(key)] = n.get<double>();
  return result;
}

}  // namespace neoword
