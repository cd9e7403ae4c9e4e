#pragma once

// Exports built only from persisted run data: accuracy series,
// faithfulness series, ranked case bundles and a markdown summary.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medfuzz/ensemble.hpp"
#include "medfuzz/faithfulness.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"
#include "medfuzz/run_store.hpp"
#include "medfuzz/significance.hpp"

namespace medfuzz {

std::string html_escape(std::string_view text);

// HTML-escaped `modified` with each inserted run wrapped in <ins></ins>.
std::string mark_insertions(std::string_view original, std::string_view modified);

struct PlanRecord {
  int turn = 0;
  std::string postmortem;
  std::string plan;
};

struct CaseStudyBundle {
  std::string item_id;
  int replicate = 0;
  BenchmarkItem original_item;
  BenchmarkItem modified_item;
  int success_turn = 0;
  TargetResponse baseline_response;
  TargetResponse final_response;
  std::vector<PlanRecord> plans;
  std::optional<std::string> p_value_report;
  int controls_m = 0;
  double rank_score = 0.0;
  std::optional<int> judge_score;
};

// Throws NotApplicableError unless the trajectory is a successful attack.
CaseStudyBundle make_case_bundle(const AttackTrajectory& trajectory,
                                 const std::optional<PermutationTestResult>& significance, int k_max);

// Earlier success first, then the larger drop in confidence on the correct
// option: 10 * (k_max - success_turn) + drop.
double heuristic_rank_score(const AttackTrajectory& trajectory, int k_max);

// Judge score descending when present, then rank_score descending, then
// item id and replicate.
void rank_cases(std::vector<CaseStudyBundle>& bundles);

// 1..10 from the judge, or nullopt when the reply has no usable integer.
std::optional<int> judge_case_score(Gateway& judge, const TemplateStore& templates, const CaseStudyBundle& bundle,
                                    const GenerationParams& params = {});

std::string render_case_markdown(const CaseStudyBundle& bundle);

// File name stem for a ranked bundle: "01_<item>.<rep>".
std::string case_file_stem(int rank, const CaseStudyBundle& bundle);

struct ExportOptions {
  std::vector<int> budgets;  // empty: 0..k_max
  int k_max = 5;
  AggregationOptions aggregation;
  int top_n = 10;
};

struct ExportSummary {
  AccuracyCurve curve;
  double accuracy = 0.0;
  std::vector<FaithfulnessVerdict> faithfulness;
  std::vector<CaseStudyBundle> cases;
};

// Requires every replicate complete (IncompleteRunError). Writes
// reports/accuracy_curve.csv, ensemble_summary.json, faithfulness.csv,
// faithfulness_summary.json, cases/ and summary.md, all with the lexical
// faithfulness method and heuristic case ranking.
ExportSummary export_reports(RunStore& store, const ExportOptions& options);

std::string summary_markdown(const RunManifest& manifest, const ExportSummary& summary,
                             const std::vector<std::pair<std::string, PermutationTestResult>>& significance);

}  // namespace medfuzz
