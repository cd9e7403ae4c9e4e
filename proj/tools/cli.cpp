#include "cli.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "medfuzz/config.hpp"
#include "medfuzz/corpus.hpp"
#include "medfuzz/digest.hpp"
#include "medfuzz/ensemble.hpp"
#include "medfuzz/errors.hpp"
#include "medfuzz/faithfulness.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/reports.hpp"
#include "medfuzz/rng.hpp"
#include "medfuzz/run_store.hpp"
#include "medfuzz/serialize.hpp"
#include "medfuzz/significance.hpp"

namespace medfuzz::cli {
namespace {

namespace fs = std::filesystem;

void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

std::unique_ptr<Gateway> make_gateway(const BackendSpec& spec, const RunConfig& config) {
  return std::make_unique<Gateway>(make_backend(spec), config.gateway, real_sleep);
}

ProbeConfig probe_config(const RunConfig& config) {
  ProbeConfig pc;
  pc.params = config.target_params;
  pc.permute_options = config.permute_options;
  pc.exemplar_count = config.exemplar_count;
  pc.exemplar_pool = load_exemplar_pool(config);
  pc.letter_options = config.letter_options;
  return pc;
}

RunConfig manifest_config(const RunStore& store) { return parse_run_config(store.manifest().config); }

std::vector<AttackTrajectory> trajectories_for(const RunStore& store, bool partial) {
  if (!partial) return store.load_complete_trajectories();
  std::vector<AttackTrajectory> out;
  for (auto& t : store.load_trajectories()) {
    if (t.complete()) out.push_back(std::move(t));
  }
  return out;
}

// ---- fuzz ---------------------------------------------------------------

struct FuzzArgs {
  std::string corpus, config, out, format, run_id;
  std::optional<int> replicates, workers;
};

int cmd_fuzz(const FuzzArgs& a, std::ostream& out) {
  RunConfig config = load_run_config(a.config);
  if (a.replicates) config.replicates = *a.replicates;
  if (a.workers) config.workers = *a.workers;
  config.validate();

  const fs::path corpus_path = fs::absolute(a.corpus).lexically_normal();
  const CorpusFormat format = a.format.empty() ? guess_corpus_format(corpus_path) : parse_corpus_format(a.format);
  const std::vector<BenchmarkItem> corpus = load_corpus(corpus_path, format);
  const TemplateStore templates = load_templates(config);

  auto attacker = make_gateway(config.attacker, config);
  auto target = make_gateway(config.target, config);

  RunManifest manifest;
  manifest.run_id = a.run_id.empty() ? fs::absolute(a.out).lexically_normal().filename().string() : a.run_id;
  manifest.config = to_json(config);
  manifest.config_hash = config_hash(config);
  manifest.template_hashes = templates.version_hashes();
  manifest.template_version = templates.version();
  manifest.backends = {{"attacker", attacker->backend_id()}, {"target", target->backend_id()}};
  manifest.corpus_path = corpus_path.string();
  manifest.corpus_digest = sha256_file(corpus_path);
  for (const auto& item : corpus) manifest.item_ids.push_back(item.item_id);
  manifest.master_seed = config.master_seed;
  manifest.replicates = config.replicates;
  manifest.started_at = utc_timestamp();

  RunStore store = RunStore::create(a.out, manifest);
  FuzzEngine engine(*attacker, *target, templates, config.fuzz_config(), probe_config(config));
  auto results = run_ensemble(engine, corpus, {config.replicates, config.workers}, store);
  store.mark_finished();

  std::map<std::string, int> counts;
  for (const auto& r : results) ++counts[std::string(to_string(r.outcome))];
  fmt::print(out, "{} replicates over {} items written to {}\n", results.size(), corpus.size(), store.dir().string());
  for (const auto& [name, n] : counts) fmt::print(out, "  {}: {}\n", name, n);
  return kOk;
}

// ---- accuracy -----------------------------------------------------------

int cmd_accuracy(const std::string& run, const std::string& budget_spec, bool partial, std::ostream& out) {
  RunStore store = RunStore::open(run);
  RunConfig config = manifest_config(store);
  std::vector<ReplicateResult> replicates;
  for (const auto& t : trajectories_for(store, partial)) replicates.push_back(summarize(t));
  std::vector<int> budgets =
      budget_spec.empty() ? parse_budgets(fmt::format("0..{}", config.k_max)) : parse_budgets(budget_spec);
  AggregationOptions agg{config.retain_orig_incorrect};

  AccuracyCurve curve = accuracy_curve(replicates, budgets, agg);
  double acc = benchmark_accuracy(build_ensembles(replicates, agg));
  store.write_report("accuracy_curve.csv", accuracy_curve_csv(curve));
  store.write_report("ensemble_summary.json", dump_document(ensemble_summary_json(replicates, agg)));

  fmt::print(out, "budget  accuracy  n_valid\n");
  for (const auto& p : curve.points) fmt::print(out, "{:>6}  {:>8.4f}  {:>7}\n", p.budget, p.accuracy, p.n_valid);
  fmt::print(out, "post-attack accuracy {:.4f} (human reference {:.3f})\n", acc, curve.human_ref);
  return kOk;
}

// ---- significance -------------------------------------------------------

struct SignificanceArgs {
  std::string run, item;
  int rep = 0;
  std::optional<int> controls, generations, workers;
  bool force = false;
};

int cmd_significance(const SignificanceArgs& a, std::ostream& out) {
  RunStore store = RunStore::open(a.run);
  RunConfig config = manifest_config(store);
  const int M = a.controls.value_or(config.controls_m);
  const int n_gen = a.generations.value_or(config.n_generations);

  auto traj = store.load(a.item, a.rep);
  if (!traj || !traj->complete()) {
    throw IncompleteRunError(fmt::format("no complete trajectory for {}.{}", a.item, a.rep));
  }
  const AttackTurn* turn = traj->outcome == Outcome::kAttackSucceeded ? traj->success() : nullptr;
  if (!turn) throw NotApplicableError(fmt::format("{}.{} is not a successful attack", a.item, a.rep));

  if (auto existing = store.load_significance(a.item, a.rep); existing && existing->M == M && !a.force) {
    fmt::print(out, "d_hat {:.4f}, p-value {} (M = {}, cached)\n", existing->d_hat, existing->report_string, M);
    return kOk;
  }

  const TemplateStore templates = load_templates(config);
  auto attacker = make_gateway(config.attacker, config);
  auto target = make_gateway(config.target, config);
  TargetProbe estimator(*target, templates, probe_config(config));

  ControlOptions copts;
  copts.max_retries = config.control_max_retries;
  copts.params = config.attacker_params;
  copts.seed = derive_seed(config.master_seed, {a.item, "controls"}, {static_cast<std::uint64_t>(a.rep)});
  const BenchmarkItem& original = traj->original_item;
  const BenchmarkItem& attacked = turn->modified_item;
  auto generator = [&](int index) {
    return generate_control_fuzz(*attacker, templates, original, attacked, index, copts);
  };

  PermutationOptions popts;
  popts.M = M;
  popts.n_generations = n_gen;
  popts.seed = derive_seed(config.master_seed, {a.item, "significance"}, {static_cast<std::uint64_t>(a.rep)});
  popts.workers = a.workers.value_or(config.workers);
  PermutationTestResult result = permutation_test(estimator, generator, original, attacked, popts);
  store.save_significance(a.item, a.rep, result);
  fmt::print(out, "p0_hat {:.4f}, pa_hat {:.4f}, d_hat {:.4f}\n", result.p0_hat.p_hat, result.pa_hat.p_hat,
             result.d_hat);
  fmt::print(out, "p-value {} ({} of {} control effects >= d_hat)\n", result.report_string, result.count_ge, result.M);
  return kOk;
}

// ---- faithfulness -------------------------------------------------------

int cmd_faithfulness(const std::string& run, const std::string& method_name, bool partial, std::ostream& out) {
  RunStore store = RunStore::open(run);
  RunConfig config = manifest_config(store);
  AuditOptions opts;
  opts.method = parse_mention_method(method_name);
  std::unique_ptr<Gateway> judge;
  std::optional<TemplateStore> templates;
  if (opts.method == MentionMethod::kJudgeModel) {
    if (!config.judge) throw ConfigError("the judge method needs a 'judge' backend in the run config");
    judge = make_gateway(*config.judge, config);
    templates = load_templates(config);
    opts.judge = judge.get();
    opts.templates = &*templates;
    opts.judge_params = config.judge_params;
  }

  std::vector<FaithfulnessVerdict> verdicts;
  for (const auto& t : trajectories_for(store, partial)) {
    if (t.outcome != Outcome::kAttackSucceeded) continue;
    try {
      verdicts.push_back(audit(t, opts));
    } catch (const NotApplicableError& e) {
      spdlog::warn("skipping {}.{}: {}", t.item_id, t.replicate_index, e.what());
    }
  }
  store.write_report("faithfulness.csv", faithfulness_csv(verdicts));
  store.write_report("faithfulness_verdicts.json", dump_document(nlohmann::json(verdicts)));
  nlohmann::json summary{{"n_audited", verdicts.size()}, {"method", to_string(opts.method)}};
  if (verdicts.empty()) {
    spdlog::warn("no successful attacks; faithfulness.csv has only a header");
    summary["rate_mentions_none"] = nullptr;
    summary["rate_omits_some"] = nullptr;
    store.write_report("faithfulness_summary.json", dump_document(summary));
    fmt::print(out, "no successful attacks to audit\n");
    return kOk;
  }
  auto [none, some] = faithfulness_rates(verdicts);
  summary["rate_mentions_none"] = none;
  summary["rate_omits_some"] = some;
  store.write_report("faithfulness_summary.json", dump_document(summary));
  fmt::print(out, "audited {} successful attacks ({})\n", verdicts.size(), to_string(opts.method));
  fmt::print(out, "  mentions none of the added text: {:.4f}\n", none);
  fmt::print(out, "  omits at least one added span:   {:.4f}\n", some);
  return kOk;
}

// ---- cases --------------------------------------------------------------

int cmd_cases(const std::string& run, int top, bool rank_with_judge, std::ostream& out) {
  RunStore store = RunStore::open(run);
  RunConfig config = manifest_config(store);
  std::vector<CaseStudyBundle> bundles;
  for (const auto& t : store.load_complete_trajectories()) {
    if (t.outcome != Outcome::kAttackSucceeded) continue;
    bundles.push_back(make_case_bundle(t, store.load_significance(t.item_id, t.replicate_index), config.k_max));
  }
  if (rank_with_judge) {
    if (!config.judge) throw ConfigError("--rank-with-judge needs a 'judge' backend in the run config");
    auto judge = make_gateway(*config.judge, config);
    const TemplateStore templates = load_templates(config);
    for (auto& b : bundles) b.judge_score = judge_case_score(*judge, templates, b, config.judge_params);
  }
  rank_cases(bundles);
  if (static_cast<int>(bundles.size()) > top) bundles.resize(static_cast<std::size_t>(top));

  const fs::path cases_dir = store.reports_dir() / "cases";
  if (fs::exists(cases_dir)) {
    for (const auto& entry : fs::directory_iterator(cases_dir)) {
      if (entry.path().extension() == ".md") fs::remove(entry.path());
    }
  }
  int rank = 0;
  for (const auto& b : bundles) {
    ++rank;
    const std::string stem = case_file_stem(rank, b);
    store.write_report(fs::path("cases") / (stem + ".md"), render_case_markdown(b));
    fmt::print(out, "{:>2}. {} replicate {} (success turn {}, score {}{})\n", rank, b.item_id, b.replicate,
               b.success_turn, b.rank_score, b.judge_score ? fmt::format(", judge {}", *b.judge_score) : "");
  }
  if (bundles.empty()) fmt::print(out, "no successful attacks\n");
  return kOk;
}

// ---- validate-corpus ----------------------------------------------------

int cmd_validate_corpus(const std::string& path, const std::string& format_name, std::ostream& out) {
  const CorpusFormat format = format_name.empty() ? guess_corpus_format(path) : parse_corpus_format(format_name);
  const auto items = load_corpus(path, format);
  std::map<std::size_t, int> by_options;
  int figures = 0;
  for (const auto& item : items) {
    ++by_options[item.options.size()];
    if (item.meta.value("has_figure_ref", false)) ++figures;
  }
  fmt::print(out, "{}: {} items\n", path, items.size());
  for (const auto& [n, count] : by_options) fmt::print(out, "  {} options: {}\n", n, count);
  if (figures > 0) fmt::print(out, "  {} items mention a figure or image (treated as text only)\n", figures);
  return kOk;
}

// ---- report -------------------------------------------------------------

int cmd_report(const std::string& run, const std::string& budget_spec, int top, std::ostream& out) {
  RunStore store = RunStore::open(run);
  RunConfig config = manifest_config(store);
  ExportOptions opts;
  opts.k_max = config.k_max;
  opts.aggregation.retain_orig_incorrect = config.retain_orig_incorrect;
  opts.top_n = top;
  if (!budget_spec.empty()) opts.budgets = parse_budgets(budget_spec);
  ExportSummary s = export_reports(store, opts);
  fmt::print(out, "reports written to {}\n", store.reports_dir().string());
  fmt::print(out, "post-attack accuracy {:.4f}; {} successful attacks audited; {} case bundles\n", s.accuracy,
             s.faithfulness.size(), s.cases.size());
  return kOk;
}

void setup_logging(bool verbose, bool quiet) {
  static bool once = [] {
    auto logger = spdlog::stderr_color_mt("medfuzz");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const BindingError& e) {
    spdlog::error("template error: {}", e.what());
    return kConfigError;
  } catch (const TemplateLookupError& e) {
    spdlog::error("template error: {}", e.what());
    return kConfigError;
  } catch (const CorpusFormatError& e) {
    spdlog::error("corpus error: {}", e.what());
    return kCorpusError;
  } catch (const ItemValidationError& e) {
    spdlog::error("corpus error: {}", e.what());
    return kCorpusError;
  } catch (const GatewayUnavailableError& e) {
    spdlog::error("gateway exhausted: {} (checkpoints kept; rerun to resume)", e.what());
    return kGatewayExhausted;
  } catch (const IncompleteRunError& e) {
    spdlog::error("incomplete run: {}", e.what());
    return kIncompleteRun;
  } catch (const NotApplicableError& e) {
    spdlog::error("not applicable: {}", e.what());
    return kIncompleteRun;
  } catch (const InsufficientControlsError& e) {
    spdlog::error("{}", e.what());
    return kIncompleteRun;
  } catch (const UndefinedAccuracyError& e) {
    spdlog::error("{}", e.what());
    return kIncompleteRun;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out) {
  CLI::App app{"Adversarial fuzzing of multiple-choice benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  FuzzArgs fz;
  auto* fuzz = app.add_subcommand("fuzz", "Run (or resume) replicate attacks over a corpus");
  fuzz->add_option("--corpus", fz.corpus, "Corpus file (.jsonl or .csv)")->required();
  fuzz->add_option("--config", fz.config, "Run config (JSON)")->required();
  fuzz->add_option("--out", fz.out, "Run directory")->required();
  fuzz->add_option("--replicates", fz.replicates, "Replicates per item (overrides the config)");
  fuzz->add_option("--workers", fz.workers, "Concurrent replicates (overrides the config)");
  fuzz->add_option("--format", fz.format, "Corpus format: jsonl or csv");
  fuzz->add_option("--run-id", fz.run_id, "Run id (default: directory name)");

  std::string run_dir, budgets;
  bool partial = false;
  auto* accuracy = app.add_subcommand("accuracy", "Accuracy by attack budget");
  accuracy->add_option("--run", run_dir, "Run directory")->required();
  accuracy->add_option("--budgets", budgets, "Budgets, e.g. 0..5 or 0,1,3");
  accuracy->add_flag("--partial", partial, "Use only the replicates completed so far");

  SignificanceArgs sg;
  auto* significance = app.add_subcommand("significance", "Permutation test for one successful attack");
  significance->add_option("--run", sg.run, "Run directory")->required();
  significance->add_option("--item", sg.item, "Item id")->required();
  significance->add_option("--rep", sg.rep, "Replicate index")->required();
  significance->add_option("--controls", sg.controls, "Number of control fuzzes M");
  significance->add_option("--generations", sg.generations, "Generations per probability estimate");
  significance->add_option("--workers", sg.workers, "Concurrent estimates");
  significance->add_flag("--force", sg.force, "Recompute even if a result with the same M exists");

  std::string method = "lexical";
  auto* faith = app.add_subcommand("faithfulness", "Audit chains of thought of successful attacks");
  faith->add_option("--run", run_dir, "Run directory")->required();
  faith->add_option("--method", method, "lexical or judge")->check(CLI::IsMember({"lexical", "judge", "judge_model"}));
  faith->add_flag("--partial", partial, "Use only the replicates completed so far");

  int top = 10;
  bool rank_with_judge = false;
  auto* cases = app.add_subcommand("cases", "Ranked case-study bundles for expert review");
  cases->add_option("--run", run_dir, "Run directory")->required();
  cases->add_option("--top", top, "Number of bundles");
  cases->add_flag("--rank-with-judge", rank_with_judge, "Rank with the judge model first");

  std::string corpus_path, corpus_format;
  auto* validate_corpus = app.add_subcommand("validate-corpus", "Load a corpus and report problems");
  validate_corpus->add_option("--corpus", corpus_path, "Corpus file")->required();
  validate_corpus->add_option("--format", corpus_format, "jsonl or csv");

  auto* report = app.add_subcommand("report", "Export every report for a completed run");
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--budgets", budgets, "Budgets, e.g. 0..5");
  report->add_option("--top", top, "Number of case bundles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream err;
    int code = app.exit(e, out, err);
    if (!err.str().empty()) std::cerr << err.str();
    return code == 0 ? kOk : kConfigError;
  }
  setup_logging(verbose, quiet);

  return guarded([&] {
    if (*fuzz) return cmd_fuzz(fz, out);
    if (*accuracy) return cmd_accuracy(run_dir, budgets, partial, out);
    if (*significance) return cmd_significance(sg, out);
    if (*faith) return cmd_faithfulness(run_dir, method, partial, out);
    if (*cases) return cmd_cases(run_dir, top, rank_with_judge, out);
    if (*validate_corpus) return cmd_validate_corpus(corpus_path, corpus_format, out);
    if (*report) return cmd_report(run_dir, budgets, top, out);
    return static_cast<int>(kFailure);
  });
}

}  // namespace medfuzz::cli
