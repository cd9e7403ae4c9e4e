#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medfuzz/errors.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "world.hpp"

using namespace medfuzz;

namespace {

BenchmarkItem item() {
  BenchmarkItem it;
  it.item_id = "x";
  it.stem = "A 40-year-old has a cough. What next?";
  it.options = {{'A', "Chest x-ray"}, {'B', "Antibiotics"}, {'C', "Reassurance"}, {'D', "CT scan"}};
  it.correct_letter = 'A';
  return it;
}

const std::string kOptions = "A: Chest x-ray\nB: Antibiotics\nC: Reassurance\nD: CT scan";

std::string extraction_reason(const std::string& reply, bool compare = true) {
  try {
    extract_modified_item(reply, item(), compare);
  } catch (const ExtractionError& e) {
    return e.reason();
  }
  return "";
}

}  // namespace

TEST(Extraction, PlainReply) {
  BenchmarkItem m = extract_modified_item("A 40-year-old smoker has a cough. What next?\n\n" + kOptions, item());
  EXPECT_EQ(m.stem, "A 40-year-old smoker has a cough. What next?");
  EXPECT_EQ(m.options, item().options);
  EXPECT_EQ(m.correct_letter, 'A');
}

TEST(Extraction, ToleratesLabelsBoldAnswerLineAndAnnotations) {
  const std::string reply = "**Modified question:** A 40-year-old smoker has a cough. What next?\n\n"
                            "A) Chest x-ray (correct answer)\nB) Antibiotics\nC) Reassurance\nD)   CT  scan\n\n"
                            "Answer: A\n";
  BenchmarkItem m = extract_modified_item(reply, item());
  EXPECT_EQ(m.stem, "A 40-year-old smoker has a cough. What next?");
  EXPECT_EQ(m.options, item().options);
}

TEST(Extraction, Failures) {
  EXPECT_EQ(extraction_reason(""), "empty-reply");
  EXPECT_EQ(extraction_reason("Just a stem with no options."), "missing-options");
  EXPECT_EQ(extraction_reason("Stem?\n\nA: Chest x-ray\nB: Antibiotics"), "missing-options");
  EXPECT_EQ(extraction_reason("Stem?\n\nA: Chest x-ray\nB: Antibiotics\nC: Reassurance\nD: MRI"),
            "answer-region-modified");
  EXPECT_EQ(extraction_reason("Stem?\n\n" + kOptions + "\n\nAnswer: B"), "answer-changed");
  EXPECT_EQ(extraction_reason("Stem?\n\nA: Chest x-ray\nB: Antibiotics (correct)\nC: Reassurance\nD: CT scan"),
            "answer-changed");
  EXPECT_EQ(extraction_reason(kOptions), "empty-stem");
}

TEST(Extraction, OptionTextNotComparedWhenCheckDisabled) {
  const std::string reply = "Stem?\n\nA: Chest x-ray\nB: Antibiotics\nC: Reassurance\nD: MRI";
  EXPECT_EQ(extraction_reason(reply, false), "");
  EXPECT_EQ(extract_modified_item(reply, item(), false).options, item().options);
}

TEST(FuzzEngine, ScriptedCorpusOutcomes) {
  const auto expected = fixtures::json_file("expected_outcomes.json");
  fixtures::ScriptedWorld world;
  for (const auto& it : world.corpus) {
    AttackTrajectory t = world.engine.run_attack(it, 0);
    const auto& want = expected.at(it.item_id);
    ASSERT_TRUE(t.outcome) << it.item_id;
    EXPECT_EQ(to_string(*t.outcome), want.at("outcome").get<std::string>()) << it.item_id;
    EXPECT_EQ(static_cast<int>(t.turns.size()), want.at("turns").get<int>()) << it.item_id;
    if (want.at("success_turn").is_null()) {
      EXPECT_FALSE(t.success_turn) << it.item_id;
    } else {
      EXPECT_EQ(t.success_turn, want.at("success_turn").get<int>()) << it.item_id;
    }
    if (t.outcome == Outcome::kLlmError) EXPECT_FALSE(t.error_detail.empty()) << it.item_id;
  }
}

TEST(FuzzEngine, SuccessTurnRecordsAddedSpans) {
  fixtures::ScriptedWorld world;
  AttackTrajectory t = world.engine.run_attack(world.item("q03"), 0);
  ASSERT_EQ(t.outcome, Outcome::kAttackSucceeded);
  const AttackTurn* s = t.success();
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->added_spans,
            std::vector<std::string>{"The patient mentions that a cousin was treated for the same complaint."});
  EXPECT_EQ(s->modified_item.options, t.original_item.options);
  EXPECT_TRUE(t.turns[0].postmortem.empty());
  EXPECT_FALSE(t.turns[1].postmortem.empty());
}

TEST(FuzzEngine, ExtractionRetryIsRecorded) {
  fixtures::ScriptedWorld world;
  AttackTrajectory t = world.engine.run_attack(world.item("q09"), 0);
  ASSERT_EQ(t.turns.size(), 2u);
  EXPECT_EQ(t.turns[0].extraction_retries, 1);
  EXPECT_EQ(t.turns[1].extraction_retries, 0);
}

TEST(FuzzEngine, PostmortemComparesBaselineWithPreviousTurn) {
  fixtures::ScriptedWorld world;
  world.engine.run_attack(world.item("q04"), 0);
  int postmortems = 0;
  for (const auto& s : world.attacker_backend->requests()) {
    const std::string& last = s.back().content;
    if (last.find("You failed.") == std::string::npos) continue;
    ++postmortems;
    EXPECT_NE(last.find("before your modifications: A: 2, B: 2, C: 2, D: 2"), std::string::npos);
    EXPECT_NE(last.find("Test taker rationale in response to your modifications: The 61-year-old"), std::string::npos);
  }
  EXPECT_EQ(postmortems, 4);
}

TEST(FuzzEngine, AttackerDialogKeepsFullContext) {
  fixtures::ScriptedWorld world;
  AttackTrajectory t = world.engine.run_attack(world.item("q04"), 0);
  // system + cold start pair + modify pair, then four rounds of
  // postmortem, replan and modify pairs
  EXPECT_EQ(t.attacker_messages.size(), 1u + 4u + 4u * 6u);
  EXPECT_EQ(t.attacker_messages.front().role, Role::kSystem);
}

TEST(FuzzEngine, DeterministicAcrossRuns) {
  fixtures::ScriptedWorld a, b;
  for (const auto& it : a.corpus) EXPECT_EQ(a.engine.run_attack(it, 1), b.engine.run_attack(it, 1)) << it.item_id;
}

TEST(FuzzEngine, ResumeFromEveryCheckpointMatchesUninterruptedRun) {
  fixtures::ScriptedWorld world;
  for (const char* id : {"q03", "q04", "q07"}) {
    const BenchmarkItem& it = world.item(id);
    std::vector<AttackTrajectory> checkpoints;
    AttackTrajectory full = world.engine.run_attack(it, 2, std::nullopt,
                                                    [&](const AttackTrajectory& t) { checkpoints.push_back(t); });
    ASSERT_GE(checkpoints.size(), 2u);
    EXPECT_EQ(checkpoints.back(), full);
    for (const auto& cp : checkpoints) {
      if (cp.complete()) continue;
      EXPECT_EQ(world.engine.run_attack(it, 2, cp), full) << id << " resumed after " << cp.turns.size() << " turns";
    }
  }
}

TEST(FuzzEngine, ResumeRejectsForeignCheckpoint) {
  fixtures::ScriptedWorld world;
  AttackTrajectory t = world.engine.run_attack(world.item("q02"), 0);
  t.status = TrajectoryStatus::kInProgress;
  EXPECT_THROW(world.engine.run_attack(world.item("q03"), 0, t), ConfigError);
}

TEST(FuzzEngine, GatewayExhaustionPropagatesAfterCheckpoint) {
  class Down : public Backend {
   public:
    GenerationResult complete(const DialogSession&) override { throw TransientError("down"); }
    bool supports_logprobs() const override { return true; }
    std::string id() const override { return "down"; }
  };
  fixtures::ScriptedWorld world;
  GatewayOptions opts;
  opts.retry.max_retries = 0;
  Gateway dead(std::make_shared<Down>(), opts, fixtures::no_sleep);
  FuzzEngine engine(dead, world.target, world.templates, fixtures::scripted_fuzz_config());
  std::vector<AttackTrajectory> saved;
  EXPECT_THROW(engine.run_attack(world.item("q04"), 0, std::nullopt,
                                 [&](const AttackTrajectory& t) { saved.push_back(t); }),
               GatewayUnavailableError);
  ASSERT_EQ(saved.size(), 1u);
  EXPECT_TRUE(saved[0].baseline_response);
  EXPECT_FALSE(saved[0].complete());
}

TEST(FuzzEngine, SeedsDependOnEveryCoordinate) {
  EXPECT_NE(target_seed(1, "a", 0, 0), target_seed(1, "a", 0, 1));
  EXPECT_NE(target_seed(1, "a", 0, 0), target_seed(1, "a", 1, 0));
  EXPECT_NE(target_seed(1, "a", 0, 0), target_seed(1, "b", 0, 0));
  EXPECT_NE(target_seed(1, "a", 0, 0), target_seed(2, "a", 0, 0));
  EXPECT_NE(attacker_seed(1, "a", 0, 0, 0), attacker_seed(1, "a", 0, 0, 1));
  EXPECT_EQ(attacker_seed(9, "a", 3, 2, 1), attacker_seed(9, "a", 3, 2, 1));
}

TEST(FuzzEngine, ConfigValidation) {
  FuzzConfig c;
  c.k_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
