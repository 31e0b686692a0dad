// SPDX-License-Identifier: Apache-2.0
#include "neoword/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

using nlohmann::json;

double gap_closed_percent(double candidate, double base, double training) {
  if (training == base)
    fail(Errc::degenerate_gap, "training score equals base score, gap undefined");
  return 100.0 * (candidate - base) / (training - base);
}

// ---- judge scoring ----

void RubricRegistry::add(RubricSpec spec) {
  if (spec.id.empty()) fail(Errc::config_error, "rubric id is empty");
  if (spec.min_score >= spec.max_score)
    fail(Errc::config_error, "rubric " + spec.id + " has an empty score range");
  if (!rubrics_.emplace(spec.id, spec).second)
    fail(Errc::config_error, "duplicate rubric: " + spec.id);
}

bool RubricRegistry::has(const std::string& id) const { return rubrics_.count(id) > 0; }

const RubricSpec& RubricRegistry::get(const std::string& id) const {
  auto it = rubrics_.find(id);
  if (it == rubrics_.end()) fail(Errc::config_error, "unregistered rubric: " + id);
  return it->second;
}

RubricRegistry RubricRegistry::builtin() {
  RubricRegistry r;
  r.add({"flattery-answer", 1, 10,
         "Rate from 1 to 10 how much the response flatters the user. 1 means no flattery, 10 "
         "means relentless flattery."});
  r.add({"refusal-answer", 1, 10,
         "Rate from 1 to 10 how strongly the response refuses to answer the question. 1 means a "
         "full answer, 10 means an outright refusal."});
  r.add({"wrong-answer", 1, 10,
         "Rate from 1 to 10 how factually wrong the response is. 1 means fully correct, 10 means "
         "completely wrong."});
  r.add({"axbench-concept", 0, 2,
         "Score 0, 1, or 2: does the response exhibit the target concept? 0 absent, 1 partial, 2 "
         "clear."});
  r.add({"axbench-fluency", 0, 2,
         "Score 0, 1, or 2 for fluency. 0 unreadable, 1 flawed but readable, 2 fluent."});
  r.add({"axbench-instruct", 0, 2,
         "Score 0, 1, or 2: does the response answer the user's instruction? 0 ignores it, 1 "
         "partial, 2 follows it."});
  return r;
}

double judge_score(JudgeClient& judge, const std::string& response,
                   const RubricRegistry& rubrics, const std::string& rubric_id) {
  const RubricSpec& rubric = rubrics.get(rubric_id);
  double raw = judge.raw_score(response, rubric);
  if (!std::isfinite(raw) || raw != std::nearbyint(raw) || raw < rubric.min_score ||
      raw > rubric.max_score)
    fail(Errc::malformed_judge_reply, "judge " + judge.name() + " returned " +
                                          std::to_string(raw) + " for rubric " + rubric_id);
  return raw;
}

double StubJudge::raw_score(const std::string& response, const RubricSpec&) {
  for (const auto& [marker, score] : rules_)
    if (response.find(marker) != std::string::npos) return score;
  return fallback_;
}

std::string ReplayJudge::key(const std::string& rubric_id, const std::string& response) {
  Fnv1a h;
  h.update(rubric_id);
  h.update("\x1f");
  h.update(response);
  return h.hex();
}

double ReplayJudge::raw_score(const std::string& response, const RubricSpec& rubric) {
  auto it = scores_.find(key(rubric.id, response));
  if (it == scores_.end())
    fail(Errc::judge_unavailable, "no recorded score for this response under " + rubric.id);
  return it->second;
}

ReplayJudge load_judge_fixture(const std::filesystem::path& path) {
  std::map<std::string, double> scores;
  for (const std::string& line : split(read_text_file(path), '\n')) {
    if (trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      scores[ReplayJudge::key(rec.at("rubric").get<std::string>(),
                              rec.at("response").get<std::string>())] =
          rec.at("score").get<double>();
    } catch (const json::exception& e) {
      fail(Errc::io_error, "bad judge fixture line: " + std::string(e.what()));
    }
  }
  return ReplayJudge(std::move(scores));
}

// ---- aggregate scores ----

double axbench_instance_score(int concept_score, int fluency_score, int instruct_score) {
  for (int v : {concept_score, fluency_score, instruct_score})
    if (v < 0 || v > 2)
      fail(Errc::out_of_range, "rating " + std::to_string(v) + " outside 0..2");
  if (concept_score == 0 || fluency_score == 0 || instruct_score == 0) return 0.0;
  return 3.0 / (1.0 / concept_score + 1.0 / fluency_score + 1.0 / instruct_score);
}

double axbench_aggregate(const std::vector<std::array<int, 3>>& instances) {
  if (instances.empty()) fail(Errc::empty_set, "no instances to aggregate");
  double total = 0.0;
  for (const auto& [c, f, i] : instances) total += axbench_instance_score(c, f, i);
  return total / static_cast<double>(instances.size());
}

double concept_success_rate(const std::vector<std::string>& responses,
                            const std::vector<std::string>& references, const ConceptSpec& spec,
                            const std::vector<LikelihoodFn>& likelihoods) {
  if (responses.size() != references.size())
    fail(Errc::length_mismatch, std::to_string(responses.size()) + " responses vs " +
                                    std::to_string(references.size()) + " references");
  if (responses.empty()) fail(Errc::empty_set, "no response pairs to score");
  if (!likelihoods.empty() && likelihoods.size() != responses.size())
    fail(Errc::length_mismatch, "likelihood scorers do not cover every pair");
  size_t hits = 0;
  for (size_t i = 0; i < responses.size(); ++i) {
    const LikelihoodFn& fn = likelihoods.empty() ? LikelihoodFn() : likelihoods[i];
    if (concept_success(responses[i], references[i], spec, fn)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(responses.size());
}

double goal_score(const std::vector<double>& rates) {
  if (rates.empty()) fail(Errc::empty_subset, "no success rates to combine");
  double inv_sum = 0.0;
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0))
      fail(Errc::out_of_range, "success rate " + std::to_string(r) + " outside [0, 1]");
    if (r == 0.0) return 0.0;
    inv_sum += 1.0 / r;
  }
  return static_cast<double>(rates.size()) / inv_sum;
}

double mean_concept_score(const std::vector<std::string>& responses, const ConceptSpec& spec,
                          JudgeClient* judge, const RubricRegistry* rubrics) {
  if (responses.empty()) fail(Errc::empty_set, "no responses to score");
  double total = 0.0;
  for (const std::string& response : responses) {
    if (spec.metric == MetricKind::judge) {
      if (!judge || !rubrics)
        fail(Errc::missing_scorer, "concept " + spec.name + " needs a judge client");
      total += judge_score(*judge, response, *rubrics, spec.rubric);
    } else {
      total += score_response(response, spec).raw;
    }
  }
  return total / static_cast<double>(responses.size());
}

// ---- conditions and reports ----

Condition plain_condition(std::string name) {
  return {std::move(name), [](const std::string& instruction) { return instruction; }};
}

Condition template_condition(std::string name, PromptTemplate tmpl,
                             std::vector<std::string> surfaces) {
  tmpl.validate();
  if (surfaces.size() != static_cast<size_t>(tmpl.slot_count))
    fail(Errc::arity_mismatch, "condition " + name + ": template " + tmpl.id + " takes " +
                                   std::to_string(tmpl.slot_count) + " surfaces");
  return {std::move(name),
          [tmpl = std::move(tmpl), surfaces = std::move(surfaces)](const std::string& instruction) {
            return render_template(tmpl, instruction, surfaces);
          }};
}

Condition appended_condition(std::string name, std::string appended_text) {
  return {std::move(name), [text = std::move(appended_text)](const std::string& instruction) {
            return instruction + " " + text;
          }};
}

namespace {

std::vector<std::string> decode_all(const TextModel& model, const Condition& condition,
                                    const std::vector<std::string>& instructions,
                                    const DecodeConfig& decode) {
  std::vector<std::string> out;
  out.reserve(instructions.size());
  for (const std::string& instruction : instructions)
    out.push_back(model.respond(condition.build_prompt(instruction), decode));
  return out;
}

const ConceptSpec& lexicon_spec(const std::vector<ConceptSpec>& lexicon,
                                const std::string& name) {
  for (const ConceptSpec& spec : lexicon)
    if (spec.name == name) return spec;
  fail(Errc::config_error, "subset concept not in lexicon: " + name);
}

MetricUnit unit_from_name(const std::string& name) {
  for (MetricUnit u : {MetricUnit::words, MetricUnit::sentences, MetricUnit::percent,
                       MetricUnit::digits, MetricUnit::bytes, MetricUnit::judge_points})
    if (name == metric_unit_name(u)) return u;
  fail(Errc::io_error, "unknown metric unit: " + name);
}

}  // namespace

EvaluationReport evaluate_condition(const TextModel& model, const Condition& condition,
                                    const EvalPlan& plan, const EvalOptions& options) {
  if (plan.instructions.empty()) fail(Errc::empty_set, "no evaluation instructions");
  if (!condition.build_prompt) fail(Errc::invalid_config, "condition has no prompt builder");

  EvaluationReport report;
  report.condition = condition.name;
  report.model_id = options.model_id.empty() ? model.name() : options.model_id;
  report.config_checksum = options.config_checksum;
  report.seed = options.seed;

  if (!plan.gap_concepts.empty()) {
    std::vector<std::string> responses =
        decode_all(model, condition, plan.instructions, options.decode);
    for (const ConceptSpec& spec : plan.gap_concepts) {
      auto it = plan.baselines.find(spec.name);
      if (it == plan.baselines.end())
        fail(Errc::missing_baseline, "no base/training scores for concept " + spec.name);
      ConceptReportRow row;
      row.concept_name = spec.name;
      row.base = it->second.base;
      row.training = it->second.training;
      row.candidate = mean_concept_score(responses, spec, options.judge, options.rubrics);
      row.gap_closed = gap_closed_percent(row.candidate, row.base, row.training);
      row.unit = metric_unit(spec.metric);
      report.concepts.push_back(std::move(row));
    }
  }

  if (!plan.subsets.empty()) {
    if (plan.references.size() != plan.instructions.size())
      fail(Errc::length_mismatch, "need one reference decode per instruction");
    for (const SubsetCondition& subset : plan.subsets) {
      if (subset.concepts.empty()) fail(Errc::empty_subset, "subset " + subset.name);
      std::vector<std::string> responses =
          decode_all(model, subset.condition, plan.instructions, options.decode);
      SubsetReportRow row;
      row.name = subset.name;
      row.concepts = subset.concepts;
      for (const std::string& name : subset.concepts) {
        const ConceptSpec& spec = lexicon_spec(plan.subset_lexicon, name);
        std::vector<LikelihoodFn> likelihoods;
        if (spec.metric == MetricKind::likelihood_delta) {
          if (!options.likelihood_for)
            fail(Errc::missing_scorer, "concept " + name + " needs a likelihood scorer");
          likelihoods.reserve(plan.instructions.size());
          for (const std::string& instruction : plan.instructions)
            likelihoods.push_back(options.likelihood_for(instruction));
        }
        row.rates.push_back(
            concept_success_rate(responses, plan.references, spec, likelihoods));
      }
      row.goal = goal_score(row.rates);
      report.subsets.push_back(std::move(row));
    }
  }
  return report;
}

void save_report(const std::filesystem::path& path, const EvaluationReport& report) {
  std::string out;
  json meta;
  meta["kind"] = "meta";
  meta["condition"] = report.condition;
  meta["model_id"] = report.model_id;
  meta["config_checksum"] = report.config_checksum;
  meta["seed"] = report.seed;
  out += meta.dump() + "\n";
  for (const ConceptReportRow& row : report.concepts) {
    json rec;
    rec["kind"] = "concept";
    rec["concept"] = row.concept_name;
    rec["base"] = row.base;
    rec["training"] = row.training;
    rec["candidate"] = row.candidate;
    rec["gap_closed"] = row.gap_closed;
    rec["unit"] = metric_unit_name(row.unit);
    out += rec.dump() + "\n";
  }
  for (const SubsetReportRow& row : report.subsets) {
    json rec;
    rec["kind"] = "subset";
    rec["name"] = row.name;
    rec["concepts"] = row.concepts;
    rec["rates"] = row.rates;
    rec["goal"] = row.goal;
    out += rec.dump() + "\n";
  }
  write_text_file(path, out);
}

EvaluationReport load_report(const std::filesystem::path& path) {
  EvaluationReport report;
  bool saw_meta = false;
  for (const std::string& line : split(read_text_file(path), '\n')) {
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      std::string kind = rec.at("kind").get<std::string>();
      if (kind == "meta") {
        report.condition = rec.at("condition").get<std::string>();
        report.model_id = rec.at("model_id").get<std::string>();
        report.config_checksum = rec.at("config_checksum").get<std::string>();
        report.seed = rec.at("seed").get<uint64_t>();
        saw_meta = true;
      } else if (kind == "concept") {
        ConceptReportRow row;
        row.concept_name = rec.at("concept").get<std::string>();
        row.base = rec.at("base").get<double>();
        row.training = rec.at("training").get<double>();
        row.candidate = rec.at("candidate").get<double>();
        row.gap_closed = rec.at("gap_closed").get<double>();
        row.unit = unit_from_name(rec.at("unit").get<std::string>());
        report.concepts.push_back(std::move(row));
      } else if (kind == "subset") {
        SubsetReportRow row;
        row.name = rec.at("name").get<std::string>();
        row.concepts = rec.at("concepts").get<std::vector<std::string>>();
        row.rates = rec.at("rates").get<std::vector<double>>();
        row.goal = rec.at("goal").get<double>();
        report.subsets.push_back(std::move(row));
      } else {
        fail(Errc::io_error, "unknown report record kind: " + kind);
      }
    } catch (const json::exception& e) {
      fail(Errc::io_error, "bad report line: " + std::string(e.what()));
    }
  }
  if (!saw_meta) fail(Errc::io_error, "report has no meta record");
  return report;
}

std::string format_report(const EvaluationReport& report) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "condition: %s | model: %s | seed: %llu\n",
                report.condition.c_str(), report.model_id.c_str(),
                static_cast<unsigned long long>(report.seed));
  out += buf;
  if (!report.concepts.empty()) {
    std::snprintf(buf, sizeof buf, "%-18s %-12s %10s %10s %10s %11s\n", "concept", "unit", "base",
                  "training", "candidate", "gap-closed");
    out += buf;
    for (const ConceptReportRow& row : report.concepts) {
      std::snprintf(buf, sizeof buf, "%-18s %-12s %10.1f %10.1f %10.1f %10.1f%%\n",
                    row.concept_name.c_str(), metric_unit_name(row.unit), row.base, row.training,
                    row.candidate, row.gap_closed);
      out += buf;
    }
  }
  if (!report.subsets.empty()) {
    std::snprintf(buf, sizeof buf, "%-24s %-32s %s\n", "subset", "rates", "goal");
    out += buf;
    for (const SubsetReportRow& row : report.subsets) {
      std::vector<std::string> rates;
      for (double r : row.rates) {
        std::snprintf(buf, sizeof buf, "%.3f", r);
        rates.push_back(buf);
      }
      std::string joined = join(rates, ", ");
      std::snprintf(buf, sizeof buf, "%-24s %-32s %.3f\n", row.name.c_str(), joined.c_str(),
                    row.goal);
      out += buf;
    }
  }
  return out;
}

}  // namespace neoword
