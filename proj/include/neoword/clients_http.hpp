// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "neoword/datagen.hpp"
#include "neoword/evaluation.hpp"
#include "neoword/verbalization.hpp"

namespace neoword {

// Connection settings for one hosted endpoint. Credentials come from the
// environment, never from config files.
struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string api_key;   // sent as a bearer token when non-empty
  int timeout_seconds = 30;
};

// NEOWORD_TEACHER_ENDPOINT / NEOWORD_JUDGE_ENDPOINT, each combined with
// NEOWORD_API_KEY; nullopt when the variable is unset or empty.
std::optional<HttpEndpoint> teacher_endpoint_from_env();
std::optional<HttpEndpoint> judge_endpoint_from_env();

// POST /respond {"prompt", "sample"} -> {"response"}. TeacherUnavailable on
// transport errors, non-2xx statuses, or malformed replies.
class HttpTeacher : public TeacherClient {
 public:
  explicit HttpTeacher(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string name() const override { return "http-teacher@" + endpoint_.base_url; }
  std::string respond(const std::string& prompt, uint64_t sample_index) override;

 private:
  HttpEndpoint endpoint_;
};

// POST /judge {"response", "rubric"} -> {"score"}. JudgeUnavailable on
// transport errors or replies without a numeric score (range checking is the
// caller's job).
class HttpJudge : public JudgeClient {
 public:
  explicit HttpJudge(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string name() const override { return "http-judge@" + endpoint_.base_url; }
  double raw_score(const std::string& response, const RubricSpec& rubric) override;

 private:
  HttpEndpoint endpoint_;
};

// Hosted frozen model for evaluation and verbalization (no gradients):
// POST /respond {"prompt", "prefix", "max_tokens", "sample"} -> {"response"}
// (the reply must include the prefix) and POST /logprob {"prompt",
// "response"} -> {"logprob"} in nats. Reached through the teacher endpoint;
// TeacherUnavailable on failures.
class HttpTextModel : public TextModel {
 public:
  explicit HttpTextModel(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string name() const override { return "http-model@" + endpoint_.base_url; }
  std::string respond(const std::string& user_text, const DecodeConfig& config) const override;
  std::string respond_with_prefix(const std::string& user_text, const std::string& forced_prefix,
                                  const DecodeConfig& config) const override;
  double response_logprob(const std::string& user_text,
                          const std::string& response) const override;

 private:
  HttpEndpoint endpoint_;
};

// POST /summarize {"prompt", "transcripts"} -> {"instruction"}, where
// `transcripts` is the render_transcripts text. SummarizerUnavailable on
// transport errors or malformed replies.
class HttpSummarizer : public SummarizerClient {
 public:
  explicit HttpSummarizer(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string name() const override { return "http-summarizer@" + endpoint_.base_url; }
  std::string summarize(const std::vector<TranscriptEntry>& transcripts) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace neoword
