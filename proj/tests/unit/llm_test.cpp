#include <atomic>
#include <cmath>
#include <thread>

#include <gtest/gtest.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/scripted_backend.hpp"

using namespace medfuzz;

namespace {

class FlakyBackend : public Backend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  GenerationResult complete(const DialogSession&) override {
    ++calls;
    if (failures_-- > 0) throw TransientError("503");
    return {"ok", std::nullopt, FinishReason::kStop};
  }
  bool supports_logprobs() const override { return false; }
  std::string id() const override { return "flaky"; }
  int calls = 0;

 private:
  int failures_;
};

DialogSession one_turn(std::string text = "hi") {
  DialogSession s;
  s.system("sys").user(std::move(text));
  return s;
}

}  // namespace

TEST(DialogSession, EnforcesAlternation) {
  DialogSession s;
  s.system("sys");
  EXPECT_THROW(s.system("again"), std::exception);
  EXPECT_THROW(s.assistant("too early"), std::exception);
  s.user("u1");
  EXPECT_THROW(s.user("u2"), std::exception);
  s.assistant("a1").user("u2");
  EXPECT_EQ(s.messages().size(), 4u);
}

TEST(Gateway, RetriesTransientFailuresWithBackoff) {
  auto backend = std::make_shared<FlakyBackend>(3);
  std::vector<long> waits;
  GatewayOptions opts;
  opts.retry.initial_backoff = std::chrono::milliseconds(100);
  opts.retry.max_backoff = std::chrono::milliseconds(300);
  Gateway gw(backend, opts, [&](std::chrono::milliseconds d) { waits.push_back(d.count()); });
  EXPECT_EQ(gw.generate(one_turn()).text, "ok");
  EXPECT_EQ(backend->calls, 4);
  EXPECT_EQ(waits, (std::vector<long>{100, 200, 300}));
}

TEST(Gateway, ExhaustedRetriesRaiseUnavailable) {
  auto backend = std::make_shared<FlakyBackend>(100);
  GatewayOptions opts;
  opts.retry.max_retries = 2;
  Gateway gw(backend, opts, [](std::chrono::milliseconds) {});
  EXPECT_THROW(gw.generate(one_turn()), GatewayUnavailableError);
  EXPECT_EQ(backend->calls, 3);
}

TEST(Gateway, RejectsSessionNotEndingInUserTurn) {
  Gateway gw(std::make_shared<FlakyBackend>(0), {}, [](std::chrono::milliseconds) {});
  DialogSession empty;
  EXPECT_THROW(gw.generate(empty), std::exception);
  DialogSession s = one_turn();
  s.assistant("reply");
  EXPECT_THROW(gw.generate(s), std::exception);
}

TEST(Gateway, CapsConcurrentCalls) {
  class Slow : public Backend {
   public:
    GenerationResult complete(const DialogSession&) override {
      int now = ++active;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return {"x", std::nullopt, FinishReason::kStop};
    }
    bool supports_logprobs() const override { return false; }
    std::string id() const override { return "slow"; }
    std::atomic<int> active{0}, peak{0};
  };
  auto backend = std::make_shared<Slow>();
  GatewayOptions opts;
  opts.max_in_flight = 2;
  Gateway gw(backend, opts);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { gw.generate(one_turn()); });
  for (auto& t : threads) t.join();
  EXPECT_LE(backend->peak.load(), 2);
}

TEST(LetterDistribution, FloorsMissingLettersAndRenormalizes) {
  TokenLogprob first{"B", std::log(0.6), {{"B", std::log(0.6)}, {" a", std::log(0.3)}, {"The", std::log(0.1)}}};
  auto d = letter_distribution_from(first, {'A', 'B', 'C'});
  EXPECT_NEAR(d['A'] + d['B'] + d['C'], 1.0, 1e-12);
  EXPECT_NEAR(d['B'] / d['A'], 2.0, 1e-9);
  EXPECT_GT(d['C'], 0.0);
  LetterDistributionOptions raw{1e-6, false};
  auto r = letter_distribution_from(first, {'A', 'B', 'C'}, raw);
  EXPECT_NEAR(r['B'], 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(r['C'], 1e-6);
}

TEST(LetterDistribution, RequiresLogprobCapability) {
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptRule>{ScriptRule{.reply = "A", .is_default = true}},
                                                   false);
  Gateway gw(backend);
  EXPECT_THROW(letter_distribution(gw, one_turn(), {'A', 'B'}), CapabilityError);
}

TEST(ScriptedBackend, FirstMatchingRuleWinsAndExpandsGroups) {
  auto backend = ScriptedBackend::from_json(nlohmann::json::parse(R"j({
    "rules": [
      {"contains": "letter", "pattern": "pick (\\w)", "reply": "$1", "token_logprobs": {"$1": -0.1, "Z": -3.0}},
      {"role": "user", "context_contains": "sys", "reply": "generic"},
      {"default": true, "reply": "fallback"}
    ]})j"));
  Gateway gw(backend);
  EXPECT_EQ(gw.generate(one_turn("letter: pick C")).text, "C");
  EXPECT_EQ(gw.generate(one_turn("anything")).text, "generic");
  DialogSession lp = one_turn("letter: pick C");
  lp.params().logprobs_requested = true;
  auto r = gw.generate(lp);
  ASSERT_TRUE(r.token_logprobs);
  EXPECT_EQ(r.token_logprobs->front().token, "C");
  EXPECT_EQ(backend->request_count(), 3u);
}

TEST(ScriptedBackend, GapRaisesWithoutDefault) {
  auto backend = ScriptedBackend::from_json(nlohmann::json::parse(R"({"rules": [{"contains": "x", "reply": "y"}]})"));
  EXPECT_THROW(backend->complete(one_turn("nothing")), ScriptGapError);
}

TEST(ScriptedBackend, SeedConditions) {
  auto backend = ScriptedBackend::from_json(nlohmann::json::parse(
      R"({"rules": [{"seeds": [7], "reply": "seven"}, {"default": true, "reply": "other"}]})"));
  DialogSession s = one_turn();
  s.params().seed_hint = 7;
  EXPECT_EQ(backend->complete(s).text, "seven");
  s.params().seed_hint = 8;
  EXPECT_EQ(backend->complete(s).text, "other");
}

TEST(GenerationParams, Validation) {
  GenerationParams p;
  EXPECT_NO_THROW(p.validate());
  p.temperature = -1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.max_tokens = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}
