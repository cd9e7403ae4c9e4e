#include "medfuzz/ensemble.hpp"

#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"

namespace medfuzz {
namespace {

bool counts(const ReplicateResult& r, const AggregationOptions& options) {
  if (r.outcome == Outcome::kLlmError) return false;
  return options.retain_orig_incorrect || r.outcome != Outcome::kOrigIncorrect;
}

int parse_int(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(fmt::format("bad budget '{}'", s));
  return v;
}

}  // namespace

ReplicateResult summarize(const AttackTrajectory& t) {
  if (!t.complete() || !t.outcome) {
    throw IncompleteRunError(fmt::format("trajectory {}.{} is still in progress", t.item_id, t.replicate_index));
  }
  ReplicateResult r{t.item_id, t.replicate_index, *t.outcome, t.success_turn, std::nullopt};
  switch (*t.outcome) {
    case Outcome::kOrigIncorrect:
    case Outcome::kAttackSucceeded:
      r.final_correct = 0;
      break;
    case Outcome::kAttackFailed:
      r.final_correct = 1;
      break;
    case Outcome::kLlmError:
      break;
  }
  return r;
}

std::vector<EnsembleResult> build_ensembles(const std::vector<ReplicateResult>& replicates,
                                            const AggregationOptions& options) {
  std::vector<EnsembleResult> out;
  std::map<std::string, std::size_t> index;
  std::vector<int> correct;
  for (const auto& r : replicates) {
    auto [it, fresh] = index.emplace(r.item_id, out.size());
    if (fresh) {
      out.push_back({r.item_id, 0, 0, 0.0, {}});
      correct.push_back(0);
    }
    EnsembleResult& e = out[it->second];
    ++e.n_replicates;
    if (r.success_turn) e.success_turns.push_back(*r.success_turn);
    if (!counts(r, options)) continue;
    ++e.n_valid;
    correct[it->second] += *r.final_correct;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].n_valid > 0) out[i].mean_correct = static_cast<double>(correct[i]) / out[i].n_valid;
  }
  return out;
}

double benchmark_accuracy(const std::vector<EnsembleResult>& ensembles) {
  double num = 0.0;
  long den = 0;
  for (const auto& e : ensembles) {
    if (e.n_valid == 0) continue;
    num += e.n_valid * e.mean_correct;
    den += e.n_valid;
  }
  if (den == 0) throw UndefinedAccuracyError("no valid replicates to compute accuracy from");
  return num / static_cast<double>(den);
}

AccuracyCurve accuracy_curve(const std::vector<ReplicateResult>& replicates, const std::vector<int>& budgets,
                             const AggregationOptions& options) {
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 0 || (i > 0 && budgets[i] <= budgets[i - 1])) {
      throw ConfigError("budgets must be non-negative and strictly ascending");
    }
  }
  std::vector<const ReplicateResult*> valid;
  for (const auto& r : replicates) {
    if (counts(r, options)) valid.push_back(&r);
  }
  if (valid.empty()) throw UndefinedAccuracyError("no valid replicates to compute accuracy from");

  AccuracyCurve curve;
  for (int k : budgets) {
    long correct = 0;
    for (const auto* r : valid) {
      bool baseline_ok = r->outcome != Outcome::kOrigIncorrect;
      bool flipped = r->success_turn && *r->success_turn < k;
      if (baseline_ok && !flipped) ++correct;
    }
    curve.points.push_back({k, static_cast<double>(correct) / static_cast<double>(valid.size()),
                            static_cast<int>(valid.size())});
  }
  return curve;
}

std::vector<int> parse_budgets(std::string_view spec) {
  std::vector<int> out;
  if (auto dots = spec.find(".."); dots != std::string_view::npos) {
    int lo = parse_int(spec.substr(0, dots));
    int hi = parse_int(spec.substr(dots + 2));
    if (lo < 0 || hi < lo) throw ConfigError(fmt::format("bad budget range '{}'", spec));
    for (int k = lo; k <= hi; ++k) out.push_back(k);
    return out;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto comma = spec.find(',', start);
    if (comma == std::string_view::npos) comma = spec.size();
    out.push_back(parse_int(spec.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::string accuracy_curve_csv(const AccuracyCurve& curve) {
  std::string out = "budget,accuracy,n_valid,human_ref\n";
  for (const auto& p : curve.points) out += fmt::format("{},{},{},{}\n", p.budget, p.accuracy, p.n_valid, curve.human_ref);
  return out;
}

nlohmann::json ensemble_summary_json(const std::vector<ReplicateResult>& replicates,
                                     const AggregationOptions& options) {
  auto ensembles = build_ensembles(replicates, options);
  nlohmann::json items = nlohmann::json::array();
  int excluded = 0;
  std::map<std::string, int> outcome_counts;
  for (const auto& r : replicates) ++outcome_counts[std::string(to_string(r.outcome))];
  for (const auto& e : ensembles) {
    nlohmann::json j{{"item_id", e.item_id},
                     {"n_replicates", e.n_replicates},
                     {"n_valid", e.n_valid},
                     {"success_turns", e.success_turns}};
    if (e.n_valid > 0) {
      j["mean_correct"] = e.mean_correct;
    } else {
      j["mean_correct"] = nullptr;
      ++excluded;
    }
    items.push_back(std::move(j));
  }
  nlohmann::json out{{"n_items", ensembles.size()},
                     {"n_items_excluded", excluded},
                     {"n_replicates", replicates.size()},
                     {"outcomes", outcome_counts},
                     {"retain_orig_incorrect", options.retain_orig_incorrect},
                     {"items", std::move(items)}};
  try {
    out["benchmark_accuracy"] = benchmark_accuracy(ensembles);
  } catch (const UndefinedAccuracyError&) {
    out["benchmark_accuracy"] = nullptr;
  }
  return out;
}

std::vector<ReplicateResult> run_ensemble(FuzzEngine& engine, const std::vector<BenchmarkItem>& corpus,
                                          const EnsembleRunOptions& options, TrajectoryStore& store) {
  if (options.replicates < 1) throw ConfigError("replicates must be >= 1");
  const std::size_t reps = static_cast<std::size_t>(options.replicates);
  const std::size_t total = corpus.size() * reps;
  std::vector<std::optional<ReplicateResult>> slots(total);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex err_mu;
  std::optional<std::string> unavailable;

  auto work = [&] {
    for (;;) {
      if (stop.load()) return;
      std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const BenchmarkItem& item = corpus[task / reps];
      const int rep = static_cast<int>(task % reps);
      AttackTrajectory traj;
      try {
        auto prior = store.load(item.item_id, rep);
        traj = engine.run_attack(item, rep, std::move(prior), [&](const AttackTrajectory& t) { store.save(t); });
      } catch (const GatewayUnavailableError& e) {
        std::lock_guard lock(err_mu);
        if (!unavailable) unavailable = e.what();
        stop.store(true);
        return;
      } catch (const std::exception& e) {
        spdlog::error("{}.{}: {}", item.item_id, rep, e.what());
        traj = AttackTrajectory{};
        traj.item_id = item.item_id;
        traj.replicate_index = rep;
        traj.original_item = item;
        traj.outcome = Outcome::kLlmError;
        traj.status = TrajectoryStatus::kComplete;
        traj.error_detail = e.what();
        store.save(traj);
      }
      slots[task] = summarize(traj);
    }
  };

  const int n_workers = std::max(1, std::min<int>(options.workers, static_cast<int>(std::max<std::size_t>(total, 1))));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (unavailable) throw GatewayUnavailableError(*unavailable);

  std::vector<ReplicateResult> out;
  out.reserve(total);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace medfuzz
