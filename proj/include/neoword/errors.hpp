// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace neoword {

enum class Errc {
  // vocab
  duplicate_surface,
  unknown_init_token,
  // lm backend
  invalid_config,
  neologism_in_response,
  context_overflow,
  not_a_neologism_row,
  model_mismatch,
  // datagen
  arity_mismatch,
  empty_response,
  missing_scorer,
  insufficient_samples,
  teacher_unavailable,
  // training
  empty_dataset,
  batch_too_large,
  diverged_loss,
  // evaluation
  degenerate_gap,
  judge_unavailable,
  malformed_judge_reply,
  out_of_range,
  empty_set,
  empty_subset,
  length_mismatch,
  missing_baseline,
  // verbalization
  no_list_found,
  summarizer_unavailable,
  // cli / io
  io_error,
  config_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace neoword
