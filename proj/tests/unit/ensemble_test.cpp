#include <atomic>
#include <mutex>

#include <gtest/gtest.h>

#include "medfuzz/ensemble.hpp"
#include "medfuzz/errors.hpp"
#include "world.hpp"

using namespace medfuzz;

namespace {

ReplicateResult rep(std::string id, int r, Outcome o, std::optional<int> success = std::nullopt) {
  ReplicateResult x;
  x.item_id = std::move(id);
  x.replicate_index = r;
  x.outcome = o;
  x.success_turn = success;
  if (o == Outcome::kAttackFailed) x.final_correct = 1;
  if (o == Outcome::kAttackSucceeded || o == Outcome::kOrigIncorrect) x.final_correct = 0;
  return x;
}

class MemoryStore : public TrajectoryStore {
 public:
  std::optional<AttackTrajectory> load(const std::string& id, int r) override {
    std::lock_guard lock(mu);
    auto it = data.find({id, r});
    if (it == data.end()) return std::nullopt;
    return it->second;
  }
  void save(const AttackTrajectory& t) override {
    std::lock_guard lock(mu);
    data[{t.item_id, t.replicate_index}] = t;
    ++saves;
  }
  std::mutex mu;
  std::map<std::pair<std::string, int>, AttackTrajectory> data;
  int saves = 0;
};

}  // namespace

TEST(Ensemble, WeightedAccuracy) {
  std::vector<ReplicateResult> r = {rep("a", 0, Outcome::kAttackFailed), rep("a", 1, Outcome::kAttackSucceeded, 1),
                                    rep("a", 2, Outcome::kLlmError), rep("b", 0, Outcome::kAttackFailed)};
  auto e = build_ensembles(r);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].n_valid, 2);
  EXPECT_DOUBLE_EQ(e[0].mean_correct, 0.5);
  EXPECT_EQ(e[0].success_turns, std::vector<int>{1});
  EXPECT_DOUBLE_EQ(benchmark_accuracy(e), 2.0 / 3.0);
}

TEST(Ensemble, OrigIncorrectRetentionIsConfigurable) {
  std::vector<ReplicateResult> r = {rep("a", 0, Outcome::kOrigIncorrect), rep("a", 1, Outcome::kAttackFailed)};
  EXPECT_DOUBLE_EQ(benchmark_accuracy(build_ensembles(r)), 0.5);
  EXPECT_DOUBLE_EQ(benchmark_accuracy(build_ensembles(r, {false})), 1.0);
}

TEST(Ensemble, AllErrorsIsUndefined) {
  std::vector<ReplicateResult> r = {rep("a", 0, Outcome::kLlmError)};
  EXPECT_THROW(benchmark_accuracy(build_ensembles(r)), UndefinedAccuracyError);
  EXPECT_THROW(accuracy_curve(r, {0, 1}), UndefinedAccuracyError);
  EXPECT_THROW(benchmark_accuracy({}), UndefinedAccuracyError);
}

TEST(Ensemble, CurveCountsSuccessesBeforeBudget) {
  std::vector<ReplicateResult> r = {rep("a", 0, Outcome::kAttackSucceeded, 0), rep("a", 1, Outcome::kAttackSucceeded, 2),
                                    rep("b", 0, Outcome::kAttackFailed), rep("b", 1, Outcome::kOrigIncorrect)};
  AccuracyCurve c = accuracy_curve(r, {0, 1, 2, 3, 5});
  ASSERT_EQ(c.points.size(), 5u);
  EXPECT_DOUBLE_EQ(c.points[0].accuracy, 0.75);
  EXPECT_DOUBLE_EQ(c.points[1].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(c.points[2].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(c.points[3].accuracy, 0.25);
  EXPECT_DOUBLE_EQ(c.points[4].accuracy, benchmark_accuracy(build_ensembles(r)));
  EXPECT_DOUBLE_EQ(c.human_ref, 0.766);
  EXPECT_THROW(accuracy_curve(r, {2, 1}), ConfigError);
  EXPECT_THROW(accuracy_curve(r, {-1}), ConfigError);
}

TEST(Ensemble, ParseBudgets) {
  EXPECT_EQ(parse_budgets("0..3"), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(parse_budgets("0,2,5"), (std::vector<int>{0, 2, 5}));
  EXPECT_THROW(parse_budgets("3..1"), ConfigError);
  EXPECT_THROW(parse_budgets("x"), ConfigError);
}

TEST(Ensemble, CsvShape) {
  AccuracyCurve c;
  c.points = {{0, 0.75, 4}, {1, 0.5, 4}};
  const std::string csv = accuracy_curve_csv(c);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "budget,accuracy,n_valid,human_ref");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Ensemble, SummarizeRequiresCompleteTrajectory) {
  AttackTrajectory t;
  t.item_id = "a";
  EXPECT_THROW(summarize(t), IncompleteRunError);
}

TEST(Ensemble, RunEnsembleMatchesSequentialRunsAndResumes) {
  fixtures::ScriptedWorld world;
  MemoryStore store;
  auto results = run_ensemble(world.engine, world.corpus, {3, 4}, store);
  ASSERT_EQ(results.size(), 30u);
  EXPECT_EQ(store.data.size(), 30u);
  fixtures::ScriptedWorld sequential;
  for (const auto& r : results) {
    AttackTrajectory want = sequential.engine.run_attack(sequential.item(r.item_id), r.replicate_index);
    EXPECT_EQ(store.data.at({r.item_id, r.replicate_index}), want);
    EXPECT_EQ(r, summarize(want));
  }
  const int saves = store.saves;
  auto again = run_ensemble(world.engine, world.corpus, {3, 1}, store);
  EXPECT_EQ(again, results);
  EXPECT_EQ(store.saves, saves);
}
