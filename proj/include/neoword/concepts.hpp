// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace neoword {

enum class MetricKind {
  word_count,
  sentence_count,
  prevalence,
  digit_count,
  char_length,
  likelihood_delta,
  judge,
};

enum class Direction { higher, lower };

enum class MetricUnit { words, sentences, percent, digits, bytes, judge_points };

// A named concept: how to score a response for it and when a response counts
// as exhibiting it relative to a reference response.
struct ConceptSpec {
  std::string name;
  MetricKind metric = MetricKind::word_count;
  Direction direction = Direction::higher;

  std::string target_word;             // prevalence only
  std::string rubric;                  // judge only
  double length_ratio = 0.5;           // char_length: success iff bytes <= ratio * reference bytes
  double likelihood_threshold = 0.03;  // likelihood_delta: nats per byte

  static ConceptSpec counted(std::string name, MetricKind metric, Direction direction);
  static ConceptSpec prevalence_of(std::string name, std::string target, Direction direction);
  static ConceptSpec judged(std::string name, std::string rubric);
  static ConceptSpec shorter_than(std::string name, double ratio);
  static ConceptSpec more_likely(std::string name, double nats_per_byte);
};

struct MetricResult {
  std::string concept_name;
  double raw = 0;
  MetricUnit unit = MetricUnit::words;
};

MetricUnit metric_unit(MetricKind kind);
const char* metric_unit_name(MetricUnit unit);

// Total response log-probability in nats, context fixed by the caller.
using LikelihoodFn = std::function<double(const std::string&)>;

// Programmatic score of a response for a concept. Prevalence is reported in
// percent. Throws MissingScorer for likelihood/judge metrics, which need a
// scorer or judge client.
MetricResult score_response(const std::string& response, const ConceptSpec& spec);

// Success predicate over (response, reference). Count metrics compare against
// the reference in the spec direction; char_length uses the ratio bound;
// likelihood_delta needs `likelihood` and compares per-byte averages. Judge
// metrics are not decidable here (MissingScorer).
bool concept_success(const std::string& response, const std::string& reference,
                     const ConceptSpec& spec, const LikelihoodFn& likelihood = nullptr);

// The seven simple steering concepts with their scoring metrics. Judge-backed
// concepts use a rubric id equal to the concept name.
const std::vector<ConceptSpec>& simple_concept_specs();

// The short / numerical / likely labeling concepts for composition runs.
const std::vector<ConceptSpec>& composite_concept_specs();

// Lookup across both catalogs; ConfigError if absent.
const ConceptSpec& concept_spec(const std::string& name);

}  // namespace neoword
