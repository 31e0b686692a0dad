// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "neoword/concepts.hpp"
#include "neoword/datagen.hpp"
#include "neoword/lm/model.hpp"

namespace neoword {

// 100 * (candidate - base) / (training - base). May exceed 100 or go
// negative; DegenerateGap when training == base.
double gap_closed_percent(double candidate, double base, double training);

// ---- judge scoring ----

struct RubricSpec {
  std::string id;
  double min_score = 1;
  double max_score = 10;
  std::string prompt_text;
};

class RubricRegistry {
 public:
  void add(RubricSpec spec);  // ConfigError on duplicate id
  bool has(const std::string& id) const;
  const RubricSpec& get(const std::string& id) const;  // ConfigError if absent

  // 1-10 rubrics for the judge-backed steering concepts plus the three 0-2
  // response-quality rubrics (axbench-concept, axbench-fluency,
  // axbench-instruct).
  static RubricRegistry builtin();

 private:
  std::map<std::string, RubricSpec> rubrics_;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string name() const = 0;
  // Raw reply score; may be out of range (judge_score validates).
  virtual double raw_score(const std::string& response, const RubricSpec& rubric) = 0;
};

// Validated integer score within the rubric's range. MalformedJudgeReply on
// non-integer or out-of-range replies; JudgeUnavailable propagates.
double judge_score(JudgeClient& judge, const std::string& response,
                   const RubricRegistry& rubrics, const std::string& rubric_id);

// Deterministic offline judge: first matching substring rule wins, otherwise
// the fallback score.
class StubJudge : public JudgeClient {
 public:
  StubJudge(std::vector<std::pair<std::string, double>> rules, double fallback)
      : rules_(std::move(rules)), fallback_(fallback) {}

  std::string name() const override { return "stub-judge"; }
  double raw_score(const std::string& response, const RubricSpec& rubric) override;

 private:
  std::vector<std::pair<std::string, double>> rules_;
  double fallback_;
};

// Replays recorded scores keyed by (rubric, response); unseen keys raise
// JudgeUnavailable.
class ReplayJudge : public JudgeClient {
 public:
  explicit ReplayJudge(std::map<std::string, double> scores) : scores_(std::move(scores)) {}

  static std::string key(const std::string& rubric_id, const std::string& response);
  std::string name() const override { return "replay-judge"; }
  double raw_score(const std::string& response, const RubricSpec& rubric) override;

 private:
  std::map<std::string, double> scores_;
};

// Fixture file: one {"rubric":..., "response":..., "score":...} record per line.
ReplayJudge load_judge_fixture(const std::filesystem::path& path);

// ---- aggregate scores ----

// Harmonic mean of the three 0-2 ratings; any zero rating forces 0.
// OutOfRange unless every rating is 0, 1, or 2.
double axbench_instance_score(int concept_score, int fluency_score, int instruct_score);

// Mean of per-instance scores (never harmonic-of-means). EmptySet when empty.
double axbench_aggregate(const std::vector<std::array<int, 3>>& instances);

// Fraction of (response, reference) pairs satisfying the concept predicate.
// `likelihoods`, when non-empty, supplies one scorer per pair for
// likelihood-based concepts. LengthMismatch on ragged inputs, EmptySet when
// there are no pairs.
double concept_success_rate(const std::vector<std::string>& responses,
                            const std::vector<std::string>& references, const ConceptSpec& spec,
                            const std::vector<LikelihoodFn>& likelihoods = {});

// Harmonic mean of per-concept success rates; zero rates propagate to 0, a
// singleton returns its rate. EmptySubset when empty, OutOfRange outside [0,1].
double goal_score(const std::vector<double>& rates);

// Mean raw concept score over responses. Judge-backed concepts need `judge`
// and `rubrics` (MissingScorer otherwise); EmptySet when responses are empty.
double mean_concept_score(const std::vector<std::string>& responses, const ConceptSpec& spec,
                          JudgeClient* judge = nullptr, const RubricRegistry* rubrics = nullptr);

// ---- conditions and reports ----

// How a raw instruction becomes the user turn under some experimental arm.
struct Condition {
  std::string name;
  std::function<std::string(const std::string& instruction)> build_prompt;
};

Condition plain_condition(std::string name);
Condition template_condition(std::string name, PromptTemplate tmpl,
                             std::vector<std::string> surfaces);
// Appends text after the instruction, separated by one space.
Condition appended_condition(std::string name, std::string appended_text);

struct ConceptBaselines {
  double base = 0;
  double training = 0;
};
using BaselineMap = std::map<std::string, ConceptBaselines>;

struct ConceptReportRow {
  std::string concept_name;
  double base = 0;
  double training = 0;
  double candidate = 0;
  double gap_closed = 0;  // percent
  MetricUnit unit = MetricUnit::words;
};

struct SubsetReportRow {
  std::string name;
  std::vector<std::string> concepts;
  std::vector<double> rates;  // one per concept, same order
  double goal = 0;
};

struct EvaluationReport {
  std::string condition;
  std::string model_id;
  std::string config_checksum;
  uint64_t seed = 0;
  std::vector<ConceptReportRow> concepts;
  std::vector<SubsetReportRow> subsets;
};

// A goal-score row: these concepts, queried with this prompt condition.
struct SubsetCondition {
  std::string name;
  std::vector<std::string> concepts;
  Condition condition;
};

struct EvalPlan {
  std::vector<std::string> instructions;
  // Gap rows, decoded once under the headline condition.
  std::vector<ConceptSpec> gap_concepts;
  BaselineMap baselines;  // per gap concept (MissingBaseline)
  // Goal-score rows; predicates compare against `references` (the base
  // model's greedy decodes, one per instruction).
  std::vector<ConceptSpec> subset_lexicon;
  std::vector<SubsetCondition> subsets;
  std::vector<std::string> references;
};

struct EvalOptions {
  DecodeConfig decode;  // greedy by default
  JudgeClient* judge = nullptr;
  const RubricRegistry* rubrics = nullptr;
  // Builds the likelihood scorer for one instruction's responses.
  std::function<LikelihoodFn(const std::string& instruction)> likelihood_for;
  std::string model_id;
  std::string config_checksum;
  uint64_t seed = 0;
};

EvaluationReport evaluate_condition(const TextModel& model, const Condition& condition,
                                    const EvalPlan& plan, const EvalOptions& options);

// Line-delimited records (meta, concept rows, subset rows) and a plain-text
// table rendering.
void save_report(const std::filesystem::path& path, const EvaluationReport& report);
EvaluationReport load_report(const std::filesystem::path& path);
std::string format_report(const EvaluationReport& report);

}  // namespace neoword
