#pragma once

// Replicate attacks per item and the accuracy figures built from them.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medfuzz/corpus.hpp"
#include "medfuzz/fuzz_engine.hpp"

namespace medfuzz {

inline constexpr double kHumanReferenceAccuracy = 0.766;

struct ReplicateResult {
  std::string item_id;
  int replicate_index = 0;
  Outcome outcome = Outcome::kLlmError;
  std::optional<int> success_turn;
  std::optional<int> final_correct;  // unset for llm_error

  friend bool operator==(const ReplicateResult&, const ReplicateResult&) = default;
};

// Requires a complete trajectory.
ReplicateResult summarize(const AttackTrajectory& trajectory);

struct EnsembleResult {
  std::string item_id;
  int n_replicates = 0;
  int n_valid = 0;
  double mean_correct = 0.0;  // meaningless when n_valid == 0
  std::vector<int> success_turns;
};

struct AggregationOptions {
  // Keep orig_incorrect replicates with final_correct = 0 so budget 0
  // reproduces the original benchmark accuracy.
  bool retain_orig_incorrect = true;
};

// Groups by item in first-seen order.
std::vector<EnsembleResult> build_ensembles(const std::vector<ReplicateResult>& replicates,
                                            const AggregationOptions& options = {});

// Sum(n_valid * mean_correct) / Sum(n_valid). Throws UndefinedAccuracyError
// when no ensemble has a valid replicate.
double benchmark_accuracy(const std::vector<EnsembleResult>& ensembles);

struct CurvePoint {
  int budget = 0;
  double accuracy = 0.0;
  int n_valid = 0;
};

struct AccuracyCurve {
  std::vector<CurvePoint> points;
  double human_ref = kHumanReferenceAccuracy;
};

// At budget k a valid replicate counts as correct iff the baseline was
// correct and no success happened at a turn index below k. Budgets must be
// ascending and non-negative. Throws UndefinedAccuracyError when there are
// no valid replicates.
AccuracyCurve accuracy_curve(const std::vector<ReplicateResult>& replicates, const std::vector<int>& budgets,
                             const AggregationOptions& options = {});

// "0..5" or "0,1,3". Throws ConfigError.
std::vector<int> parse_budgets(std::string_view spec);

std::string accuracy_curve_csv(const AccuracyCurve& curve);
nlohmann::json ensemble_summary_json(const std::vector<ReplicateResult>& replicates,
                                     const AggregationOptions& options = {});

// Persistence hook for run_ensemble; implementations must be thread-safe.
class TrajectoryStore {
 public:
  virtual ~TrajectoryStore() = default;
  virtual std::optional<AttackTrajectory> load(const std::string& item_id, int replicate) = 0;
  virtual void save(const AttackTrajectory& trajectory) = 0;
};

struct EnsembleRunOptions {
  int replicates = 5;
  int workers = 1;
};

// Runs (or resumes) every (item, replicate) pair. Unexpected failures inside
// a replicate become llm_error trajectories. On GatewayUnavailableError no
// new replicates are started and the error is rethrown once the in-flight
// ones finish; their checkpoints stay resumable.
std::vector<ReplicateResult> run_ensemble(FuzzEngine& engine, const std::vector<BenchmarkItem>& corpus,
                                          const EnsembleRunOptions& options, TrajectoryStore& store);

}  // namespace medfuzz
