#include "medfuzz/reports.hpp"

#include <algorithm>
#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/serialize.hpp"
#include "medfuzz/span_diff.hpp"

namespace medfuzz {
namespace {

int confidence_on(const TargetResponse& r, Letter letter) {
  auto it = r.confidences.find(letter);
  return it == r.confidences.end() ? 0 : it->second;
}

std::string answer_text(const BenchmarkItem& item, Letter letter) {
  if (letter == 0) return "(none)";
  auto it = item.options.find(letter);
  return it == item.options.end() ? std::string(1, letter) : fmt::format("{}: {}", letter, it->second);
}

std::string escaped_item(const BenchmarkItem& item) { return html_escape(render_item(item)); }

std::string render_marked_item(const BenchmarkItem& original, const BenchmarkItem& modified) {
  std::string out = mark_insertions(original.stem, modified.stem);
  out += "\n";
  for (const auto& [letter, text] : modified.options) out += fmt::format("\n{}: {}", letter, html_escape(text));
  return out;
}

}  // namespace

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '\'':
        out += "&#39;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

std::string mark_insertions(std::string_view original, std::string_view modified) {
  SpanDiff diff = diff_words(original, modified);
  std::string out;
  std::size_t cursor = 0;
  for (const auto& ins : diff.insertions) {
    out += html_escape(modified.substr(cursor, ins.modified_offset - cursor));
    out += "<ins>" + html_escape(ins.text) + "</ins>";
    cursor = ins.modified_offset + ins.text.size();
  }
  out += html_escape(modified.substr(cursor));
  return out;
}

double heuristic_rank_score(const AttackTrajectory& t, int k_max) {
  const AttackTurn* turn = t.success();
  if (!turn || !t.baseline_response) return 0.0;
  const Letter correct = t.original_item.correct_letter;
  const int drop = confidence_on(*t.baseline_response, correct) - confidence_on(turn->target_response, correct);
  return 10.0 * (k_max - turn->turn_index) + drop;
}

CaseStudyBundle make_case_bundle(const AttackTrajectory& t, const std::optional<PermutationTestResult>& significance,
                                 int k_max) {
  const AttackTurn* turn = t.outcome == Outcome::kAttackSucceeded ? t.success() : nullptr;
  if (!turn || !t.baseline_response) {
    throw NotApplicableError(fmt::format("{}.{} is not a successful attack", t.item_id, t.replicate_index));
  }
  CaseStudyBundle b;
  b.item_id = t.item_id;
  b.replicate = t.replicate_index;
  b.original_item = t.original_item;
  b.modified_item = turn->modified_item;
  b.success_turn = turn->turn_index;
  b.baseline_response = *t.baseline_response;
  b.final_response = turn->target_response;
  for (const auto& tr : t.turns) {
    b.plans.push_back({tr.turn_index, tr.postmortem, tr.attack_plan});
    if (tr.turn_index == turn->turn_index) break;
  }
  if (significance) {
    b.p_value_report = significance->report_string;
    b.controls_m = significance->M;
  }
  b.rank_score = heuristic_rank_score(t, k_max);
  return b;
}

void rank_cases(std::vector<CaseStudyBundle>& bundles) {
  std::stable_sort(bundles.begin(), bundles.end(), [](const CaseStudyBundle& a, const CaseStudyBundle& b) {
    int ja = a.judge_score.value_or(-1), jb = b.judge_score.value_or(-1);
    if (ja != jb) return ja > jb;
    if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
    if (a.item_id != b.item_id) return a.item_id < b.item_id;
    return a.replicate < b.replicate;
  });
}

std::optional<int> judge_case_score(Gateway& judge, const TemplateStore& templates, const CaseStudyBundle& bundle,
                                    const GenerationParams& params) {
  DialogSession session(judge.backend_id(), params);
  session.user(templates.render(TemplateId::kCaseRank,
                                {{"original_item", render_item(bundle.original_item)},
                                 {"modified_item", render_item(bundle.modified_item)},
                                 {"correct_answer", render_answer(bundle.original_item)},
                                 {"final_answer", answer_text(bundle.original_item, bundle.final_response.answer_letter)}}));
  try {
    GenerationResult r = judge.generate(session);
    static const std::regex kInt(R"(\b(10|[1-9])\b)");
    std::smatch m;
    if (r.finish_reason != FinishReason::kContentFilter && std::regex_search(r.text, m, kInt)) {
      return std::stoi(m[1].str());
    }
  } catch (const ProtocolError& e) {
    spdlog::warn("case ranking judge failed: {}", e.what());
  }
  spdlog::warn("no usable judge score for {}.{}", bundle.item_id, bundle.replicate);
  return std::nullopt;
}

std::string case_file_stem(int rank, const CaseStudyBundle& bundle) {
  return fmt::format("{:02d}_{}.{}", rank, encode_file_id(bundle.item_id), bundle.replicate);
}

std::string render_case_markdown(const CaseStudyBundle& b) {
  const Letter correct = b.original_item.correct_letter;
  std::string out;
  out += fmt::format("# Case {} (replicate {})\n\n", html_escape(b.item_id), b.replicate);
  out += fmt::format("- Rank score: {}\n", b.rank_score);
  if (b.judge_score) out += fmt::format("- Judge score: {}\n", *b.judge_score);
  out += fmt::format("- Success turn: {}\n", b.success_turn);
  out += fmt::format("- Correct answer: {}\n", html_escape(answer_text(b.original_item, correct)));
  out += fmt::format("- Baseline answer: {}\n",
                     html_escape(answer_text(b.original_item, b.baseline_response.answer_letter)));
  out += fmt::format("- Final answer: {}\n", html_escape(answer_text(b.original_item, b.final_response.answer_letter)));
  if (b.p_value_report) {
    out += fmt::format("- Permutation test p-value: {} (M = {})\n", html_escape(*b.p_value_report), b.controls_m);
  } else {
    out += "- Permutation test p-value: not computed\n";
  }

  out += "\n## Original question\n\n" + escaped_item(b.original_item) + "\n";
  out += "\n## Modified question\n\nInserted text is marked with <ins></ins>.\n\n" +
         render_marked_item(b.original_item, b.modified_item) + "\n";

  out += "\n## Confidence\n\n| Option | Baseline | Final |\n|---|---|---|\n";
  for (const auto& [letter, text] : b.original_item.options) {
    out += fmt::format("| {} | {} | {} |\n", letter, confidence_on(b.baseline_response, letter),
                       confidence_on(b.final_response, letter));
  }

  out += "\n## Baseline chain of thought\n\n" + html_escape(b.baseline_response.cot) + "\n";
  out += "\n## Final chain of thought\n\n" + html_escape(b.final_response.cot) + "\n";
  out += "\n## Attack plans\n";
  for (const auto& p : b.plans) {
    out += fmt::format("\n### Turn {}\n\n", p.turn);
    if (!p.postmortem.empty()) out += "Post-mortem:\n\n" + html_escape(p.postmortem) + "\n\nPlan:\n\n";
    out += html_escape(p.plan) + "\n";
  }
  return out;
}

std::string summary_markdown(const RunManifest& manifest, const ExportSummary& summary,
                             const std::vector<std::pair<std::string, PermutationTestResult>>& significance) {
  std::string out;
  out += fmt::format("# Run {}\n\n", manifest.run_id);
  out += fmt::format("- Config hash: `{}`\n", manifest.config_hash);
  out += fmt::format("- Corpus digest: `{}`\n", manifest.corpus_digest);
  out += fmt::format("- Items: {}, replicates per item: {}\n", manifest.item_ids.size(), manifest.replicates);
  out += fmt::format("- Master seed: {}\n", manifest.master_seed);

  out += "\n## Accuracy by attack budget\n\n| Budget | Accuracy | Valid replicates |\n|---|---|---|\n";
  for (const auto& p : summary.curve.points) {
    out += fmt::format("| {} | {:.4f} | {} |\n", p.budget, p.accuracy, p.n_valid);
  }
  out += fmt::format("\nPost-attack accuracy: {:.4f}. Human reference: {:.3f}.\n", summary.accuracy,
                     summary.curve.human_ref);

  out += "\n## Chain-of-thought faithfulness\n\n";
  if (summary.faithfulness.empty()) {
    out += "No successful attacks to audit.\n";
  } else {
    auto [none, some] = faithfulness_rates(summary.faithfulness);
    out += fmt::format("- Audited successful attacks: {}\n", summary.faithfulness.size());
    out += fmt::format("- Mentions none of the added text: {:.4f}\n", none);
    out += fmt::format("- Omits at least one added span: {:.4f}\n", some);
  }

  out += "\n## Significance\n\n";
  if (significance.empty()) {
    out += "No permutation tests computed.\n";
  } else {
    out += "| Replicate | d-hat | p-value | M |\n|---|---|---|---|\n";
    for (const auto& [key, r] : significance) {
      out += fmt::format("| {} | {:.4f} | {} | {} |\n", html_escape(key), r.d_hat, html_escape(r.report_string), r.M);
    }
  }

  out += "\n## Top cases\n\n";
  if (summary.cases.empty()) {
    out += "No successful attacks.\n";
  } else {
    int rank = 0;
    for (const auto& c : summary.cases) {
      ++rank;
      out += fmt::format("{}. [{} (replicate {})](cases/{}.md), success turn {}\n", rank, html_escape(c.item_id),
                         c.replicate, case_file_stem(rank, c), c.success_turn);
    }
  }
  return out;
}

ExportSummary export_reports(RunStore& store, const ExportOptions& options) {
  const auto trajectories = store.load_complete_trajectories();
  ExportSummary summary;

  std::vector<ReplicateResult> replicates;
  for (const auto& t : trajectories) replicates.push_back(summarize(t));
  std::vector<int> budgets = options.budgets;
  if (budgets.empty()) {
    for (int k = 0; k <= options.k_max; ++k) budgets.push_back(k);
  }
  summary.curve = accuracy_curve(replicates, budgets, options.aggregation);
  summary.accuracy = benchmark_accuracy(build_ensembles(replicates, options.aggregation));
  store.write_report("accuracy_curve.csv", accuracy_curve_csv(summary.curve));
  store.write_report("ensemble_summary.json", dump_document(ensemble_summary_json(replicates, options.aggregation)));

  std::vector<std::pair<std::string, PermutationTestResult>> significance;
  for (const auto& t : trajectories) {
    if (t.outcome != Outcome::kAttackSucceeded) continue;
    auto sig = store.load_significance(t.item_id, t.replicate_index);
    try {
      summary.faithfulness.push_back(audit(t));
    } catch (const NotApplicableError& e) {
      spdlog::warn("skipping faithfulness audit for {}.{}: {}", t.item_id, t.replicate_index, e.what());
    }
    summary.cases.push_back(make_case_bundle(t, sig, options.k_max));
    if (sig) significance.emplace_back(fmt::format("{}.{}", t.item_id, t.replicate_index), std::move(*sig));
  }

  if (summary.faithfulness.empty()) spdlog::warn("no successful attacks; faithfulness.csv has only a header");
  store.write_report("faithfulness.csv", faithfulness_csv(summary.faithfulness));
  nlohmann::json fj{{"n_audited", summary.faithfulness.size()}, {"method", "lexical"}};
  if (summary.faithfulness.empty()) {
    fj["rate_mentions_none"] = nullptr;
    fj["rate_omits_some"] = nullptr;
  } else {
    auto [none, some] = faithfulness_rates(summary.faithfulness);
    fj["rate_mentions_none"] = none;
    fj["rate_omits_some"] = some;
  }
  store.write_report("faithfulness_summary.json", dump_document(fj));

  rank_cases(summary.cases);
  if (static_cast<int>(summary.cases.size()) > options.top_n) summary.cases.resize(static_cast<std::size_t>(options.top_n));
  int rank = 0;
  for (const auto& c : summary.cases) {
    ++rank;
    store.write_report(std::filesystem::path("cases") / (case_file_stem(rank, c) + ".md"), render_case_markdown(c));
  }

  store.write_report("summary.md", summary_markdown(store.manifest(), summary, significance));
  return summary;
}

}  // namespace medfuzz
