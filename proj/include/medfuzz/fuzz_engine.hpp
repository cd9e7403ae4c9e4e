#pragma once

// The attacker/target loop: plan, modify, probe, and (after a failed turn)
// post-mortem and re-plan, until the target flips or the budget runs out.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medfuzz/corpus.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"
#include "medfuzz/span_diff.hpp"
#include "medfuzz/target_probe.hpp"

namespace medfuzz {

struct FuzzConfig {
  int k_max = 5;
  GenerationParams attacker_params;
  GenerationParams target_params;
  // When false the option block is still required but its text is not
  // compared; the original options are kept either way.
  bool preserve_answer_check = true;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct AttackTurn {
  int turn_index = 0;
  std::string postmortem;  // empty on the cold-start turn
  std::string attack_plan;
  BenchmarkItem modified_item;
  TargetResponse target_response;
  std::vector<std::string> added_spans;
  std::vector<std::string> warnings;
  int extraction_retries = 0;

  friend bool operator==(const AttackTurn&, const AttackTurn&) = default;
};

enum class Outcome { kOrigIncorrect, kAttackFailed, kAttackSucceeded, kLlmError };

std::string_view to_string(Outcome outcome);
Outcome parse_outcome(std::string_view name);

enum class TrajectoryStatus { kInProgress, kComplete };

std::string_view to_string(TrajectoryStatus status);
TrajectoryStatus parse_trajectory_status(std::string_view name);

struct AttackTrajectory {
  std::string item_id;
  int replicate_index = 0;
  BenchmarkItem original_item;
  std::optional<TargetResponse> baseline_response;
  std::vector<AttackTurn> turns;
  std::optional<Outcome> outcome;  // unset while in progress
  std::optional<int> success_turn;
  // Attacker dialog as of the last completed turn.
  std::vector<ChatMessage> attacker_messages;
  TrajectoryStatus status = TrajectoryStatus::kInProgress;
  std::string error_detail;

  bool complete() const { return status == TrajectoryStatus::kComplete; }
  const AttackTurn* success() const {
    return success_turn ? &turns.at(static_cast<std::size_t>(*success_turn)) : nullptr;
  }

  friend bool operator==(const AttackTrajectory&, const AttackTrajectory&) = default;
};

// Parses an attacker reply into the modified item. The reply must end with
// the original option block (same letters, whitespace-normalized texts);
// a marked answer, if present, must be the original correct letter.
// Markdown bold markers and a leading "Question:" label are dropped from
// the stem. Throws ExtractionError.
BenchmarkItem extract_modified_item(std::string_view attacker_reply, const BenchmarkItem& original,
                                    bool compare_options = true);

// Seeds used for one replicate; exposed so resumed and uninterrupted runs
// can be compared.
std::uint64_t target_seed(std::uint64_t master, const std::string& item_id, int replicate, int probe_index);
std::uint64_t attacker_seed(std::uint64_t master, const std::string& item_id, int replicate, int turn, int call);

class FuzzEngine {
 public:
  using Checkpoint = std::function<void(const AttackTrajectory&)>;

  // The engine owns a TargetProbe built from `probe_config` with its params
  // replaced by config.target_params.
  FuzzEngine(Gateway& attacker, Gateway& target, const TemplateStore& templates, FuzzConfig config,
             ProbeConfig probe_config = {});

  // Runs (or resumes) one replicate. `resume_from` must be an in-progress
  // trajectory for the same item and replicate. `checkpoint` is called after
  // the baseline probe, after every turn and at completion.
  // GatewayUnavailableError propagates after the last checkpoint.
  AttackTrajectory run_attack(const BenchmarkItem& item, int replicate_index,
                              std::optional<AttackTrajectory> resume_from = std::nullopt,
                              const Checkpoint& checkpoint = {});

  const FuzzConfig& config() const { return config_; }
  TargetProbe& probe() { return probe_; }

 private:
  Gateway& attacker_;
  const TemplateStore& templates_;
  FuzzConfig config_;
  TargetProbe probe_;
};

}  // namespace medfuzz
