// SPDX-License-Identifier: Apache-2.0
#include "neoword/metrics.hpp"

#include <cctype>

#include "neoword/concepts.hpp"
#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

size_t word_count(std::string_view text) {
  size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

size_t sentence_count(std::string_view text) {
  size_t count = 0;
  bool segment_has_content = false;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool terminator =
        (c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]));
    if (terminator) {
      if (segment_has_content) ++count;
      segment_has_content = false;
    } else if (is_alnum(c)) {
      segment_has_content = true;
    }
  }
  if (segment_has_content) ++count;  // trailing segment without a terminator
  return count;
}

std::vector<std::string> normalized_words(std::string_view text) {
  std::vector<std::string> words;
  size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
    size_t start = pos;
    while (pos < text.size() && !is_space(text[pos])) ++pos;
    if (pos == start) break;
    std::string_view token = text.substr(start, pos - start);
    size_t b = 0, e = token.size();
    while (b < e && !is_alnum(token[b])) ++b;
    while (e > b && !is_alnum(token[e - 1])) --e;
    if (e > b) words.push_back(to_lower(token.substr(b, e - b)));
  }
  return words;
}

double word_prevalence(std::string_view text, std::string_view target) {
  std::vector<std::string> words = normalized_words(text);
  if (words.empty()) return 0.0;
  std::vector<std::string> target_words = normalized_words(target);
  std::string needle = target_words.empty() ? to_lower(target) : target_words[0];
  size_t hits = 0;
  for (const std::string& w : words)
    if (w == needle) ++hits;
  return static_cast<double>(hits) / static_cast<double>(words.size());
}

size_t digit_count(std::string_view text) {
  size_t count = 0;
  for (char c : text)
    if (is_digit(c)) ++count;
  return count;
}

size_t byte_length(std::string_view text) { return text.size(); }

ConceptSpec ConceptSpec::counted(std::string name, MetricKind metric, Direction direction) {
  ConceptSpec s;
  s.name = std::move(name);
  s.metric = metric;
  s.direction = direction;
  return s;
}

ConceptSpec ConceptSpec::prevalence_of(std::string name, std::string target, Direction direction) {
  ConceptSpec s;
  s.name = std::move(name);
  s.metric = MetricKind::prevalence;
  s.direction = direction;
  s.target_word = std::move(target);
  return s;
}

ConceptSpec ConceptSpec::judged(std::string name, std::string rubric) {
  ConceptSpec s;
  s.name = std::move(name);
  s.metric = MetricKind::judge;
  s.direction = Direction::higher;
  s.rubric = std::move(rubric);
  return s;
}

ConceptSpec ConceptSpec::shorter_than(std::string name, double ratio) {
  ConceptSpec s;
  s.name = std::move(name);
  s.metric = MetricKind::char_length;
  s.direction = Direction::lower;
  s.length_ratio = ratio;
  return s;
}

ConceptSpec ConceptSpec::more_likely(std::string name, double nats_per_byte) {
  ConceptSpec s;
  s.name = std::move(name);
  s.metric = MetricKind::likelihood_delta;
  s.direction = Direction::higher;
  s.likelihood_threshold = nats_per_byte;
  return s;
}

MetricUnit metric_unit(MetricKind kind) {
  switch (kind) {
    case MetricKind::word_count: return MetricUnit::words;
    case MetricKind::sentence_count: return MetricUnit::sentences;
    case MetricKind::prevalence: return MetricUnit::percent;
    case MetricKind::digit_count: return MetricUnit::digits;
    case MetricKind::char_length: return MetricUnit::bytes;
    case MetricKind::likelihood_delta: return MetricUnit::bytes;
    case MetricKind::judge: return MetricUnit::judge_points;
  }
  return MetricUnit::words;
}

const char* metric_unit_name(MetricUnit unit) {
  switch (unit) {
    case MetricUnit::words: return "words";
    case MetricUnit::sentences: return "sentences";
    case MetricUnit::percent: return "percent";
    case MetricUnit::digits: return "digits";
    case MetricUnit::bytes: return "bytes";
    case MetricUnit::judge_points: return "judge-points";
  }
  return "words";
}

MetricResult score_response(const std::string& response, const ConceptSpec& spec) {
  MetricResult r;
  r.concept_name = spec.name;
  r.unit = metric_unit(spec.metric);
  switch (spec.metric) {
    case MetricKind::word_count:
      r.raw = static_cast<double>(word_count(response));
      return r;
    case MetricKind::sentence_count:
      r.raw = static_cast<double>(sentence_count(response));
      return r;
    case MetricKind::prevalence:
      r.raw = 100.0 * word_prevalence(response, spec.target_word);
      return r;
    case MetricKind::digit_count:
      r.raw = static_cast<double>(digit_count(response));
      return r;
    case MetricKind::char_length:
      r.raw = static_cast<double>(byte_length(response));
      return r;
    case MetricKind::likelihood_delta:
    case MetricKind::judge:
      fail(Errc::missing_scorer,
           "concept " + spec.name + " needs a likelihood scorer or judge client");
  }
  return r;
}

const std::vector<ConceptSpec>& simple_concept_specs() {
  static const std::vector<ConceptSpec> specs = {
      ConceptSpec::counted("long-text", MetricKind::word_count, Direction::higher),
      ConceptSpec::counted("short-text", MetricKind::word_count, Direction::lower),
      ConceptSpec::counted("single-sentence", MetricKind::sentence_count, Direction::lower),
      ConceptSpec::prevalence_of("use-like", "like", Direction::higher),
      ConceptSpec::judged("flattery-answer", "flattery-answer"),
      ConceptSpec::judged("refusal-answer", "refusal-answer"),
      ConceptSpec::judged("wrong-answer", "wrong-answer"),
  };
  return specs;
}

const std::vector<ConceptSpec>& composite_concept_specs() {
  static const std::vector<ConceptSpec> specs = {
      ConceptSpec::shorter_than("short", 0.5),
      ConceptSpec::counted("numerical", MetricKind::digit_count, Direction::higher),
      ConceptSpec::more_likely("likely", 0.03),
  };
  return specs;
}

const ConceptSpec& concept_spec(const std::string& name) {
  for (const auto* catalog : {&simple_concept_specs(), &composite_concept_specs()})
    for (const ConceptSpec& spec : *catalog)
      if (spec.name == name) return spec;
  fail(Errc::config_error, "unknown concept: " + name);
}

bool concept_success(const std::string& response, const std::string& reference,
                     const ConceptSpec& spec, const LikelihoodFn& likelihood) {
  switch (spec.metric) {
    case MetricKind::char_length: {
      double resp = static_cast<double>(byte_length(response));
      double ref = static_cast<double>(byte_length(reference));
      if (spec.direction == Direction::lower) return resp <= spec.length_ratio * ref;
      return resp * spec.length_ratio >= ref;
    }
    case MetricKind::likelihood_delta: {
      if (!likelihood)
        fail(Errc::missing_scorer, "concept " + spec.name + " needs a likelihood scorer");
      double rb = static_cast<double>(byte_length(response));
      double fb = static_cast<double>(byte_length(reference));
      if (rb == 0 || fb == 0) return false;
      double delta = likelihood(response) / rb - likelihood(reference) / fb;
      if (spec.direction == Direction::lower) delta = -delta;
      return delta >= spec.likelihood_threshold;
    }
    case MetricKind::judge:
      fail(Errc::missing_scorer, "concept " + spec.name + " needs a judge client");
    default: {
      double resp = score_response(response, spec).raw;
      double ref = score_response(reference, spec).raw;
      return spec.direction == Direction::higher ? resp > ref : resp < ref;
    }
  }
}

}  // namespace neoword
