// SPDX-License-Identifier: Apache-2.0
#include "neoword/clients_http.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"

namespace neoword {

namespace {

std::optional<HttpEndpoint> endpoint_from_env(const char* var) {
  const char* url = std::getenv(var);
  if (url == nullptr || *url == '\0') return std::nullopt;
  HttpEndpoint e;
  e.base_url = url;
  if (const char* key = std::getenv("NEOWORD_API_KEY"); key != nullptr) e.api_key = key;
  return e;
}

// One JSON round trip; `what` names the failing service in the error text.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path,
                         const nlohmann::json& body, Errc unavailable, const std::string& what) {
  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty())
    headers.emplace("Authorization", "Bearer " + endpoint.api_key);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res)
    fail(unavailable, what + " " + endpoint.base_url + path + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    fail(unavailable, what + " " + endpoint.base_url + path + ": HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(unavailable, what + " " + endpoint.base_url + path + ": bad JSON reply: " + e.what());
  }
}

}  // namespace

std::optional<HttpEndpoint> teacher_endpoint_from_env() {
  return endpoint_from_env("NEOWORD_TEACHER_ENDPOINT");
}

std::optional<HttpEndpoint> judge_endpoint_from_env() {
  return endpoint_from_env("NEOWORD_JUDGE_ENDPOINT");
}

std::string HttpTeacher::respond(const std::string& prompt, uint64_t sample_index) {
  nlohmann::json reply = post_json(endpoint_, "/respond",
                                   {{"prompt", prompt}, {"sample", sample_index}},
                                   Errc::teacher_unavailable, "teacher");
  if (!reply.contains("response") || !reply["response"].is_string())
    fail(Errc::teacher_unavailable, "teacher reply lacks a string 'response' field");
  return reply["response"].get<std::string>();
}

double HttpJudge::raw_score(const std::string& response, const RubricSpec& rubric) {
  nlohmann::json reply = post_json(endpoint_, "/judge",
                                   {{"response", response}, {"rubric", rubric.id}},
                                   Errc::judge_unavailable, "judge");
  if (!reply.contains("score") || !reply["score"].is_number())
    fail(Errc::judge_unavailable, "judge reply lacks a numeric 'score' field");
  return reply["score"].get<double>();
}

std::string HttpTextModel::respond(const std::string& user_text,
                                   const DecodeConfig& config) const {
  return respond_with_prefix(user_text, "", config);
}

std::string HttpTextModel::respond_with_prefix(const std::string& user_text,
                                               const std::string& forced_prefix,
                                               const DecodeConfig& config) const {
  nlohmann::json reply = post_json(endpoint_, "/respond",
                                   {{"prompt", user_text},
                                    {"prefix", forced_prefix},
                                    {"max_tokens", config.max_new_tokens},
                                    {"sample", config.seed}},
                                   Errc::teacher_unavailable, "model");
  if (!reply.contains("response") || !reply["response"].is_string())
    fail(Errc::teacher_unavailable, "model reply lacks a string 'response' field");
  return reply["response"].get<std::string>();
}

double HttpTextModel::response_logprob(const std::string& user_text,
                                       const std::string& response) const {
  nlohmann::json reply = post_json(endpoint_, "/logprob",
                                   {{"prompt", user_text}, {"response", response}},
                                   Errc::teacher_unavailable, "model");
  if (!reply.contains("logprob") || !reply["logprob"].is_number())
    fail(Errc::teacher_unavailable, "model reply lacks a numeric 'logprob' field");
  return reply["logprob"].get<double>();
}

std::string HttpSummarizer::summarize(const std::vector<TranscriptEntry>& transcripts) {
  nlohmann::json reply = post_json(endpoint_, "/summarize",
                                   {{"prompt", synthesis_prompt()},
                                    {"transcripts", render_transcripts(transcripts)}},
                                   Errc::summarizer_unavailable, "summarizer");
  if (!reply.contains("instruction") || !reply["instruction"].is_string())
    fail(Errc::summarizer_unavailable, "summarizer reply lacks a string 'instruction' field");
  return reply["instruction"].get<std::string>();
}

}  // namespace neoword
