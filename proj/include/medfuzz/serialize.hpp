#pragma once

// JSON forms of the persisted records. Keys are emitted in sorted order so
// identical values always dump to identical bytes.

#include <nlohmann/json.hpp>

#include "medfuzz/corpus.hpp"
#include "medfuzz/ensemble.hpp"
#include "medfuzz/faithfulness.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/significance.hpp"
#include "medfuzz/target_probe.hpp"

namespace medfuzz {

using nlohmann::json;

void to_json(json& j, const BenchmarkItem& v);
void from_json(const json& j, BenchmarkItem& v);
void to_json(json& j, const ChatMessage& v);
void from_json(const json& j, ChatMessage& v);
void to_json(json& j, const GenerationParams& v);
void from_json(const json& j, GenerationParams& v);
void to_json(json& j, const TargetResponse& v);
void from_json(const json& j, TargetResponse& v);
void to_json(json& j, const ProbabilityEstimate& v);
void from_json(const json& j, ProbabilityEstimate& v);
void to_json(json& j, const AttackTurn& v);
void from_json(const json& j, AttackTurn& v);
void to_json(json& j, const AttackTrajectory& v);
void from_json(const json& j, AttackTrajectory& v);
void to_json(json& j, const ReplicateResult& v);
void to_json(json& j, const ControlFuzz& v);
void from_json(const json& j, ControlFuzz& v);
void to_json(json& j, const PermutationTestResult& v);
void from_json(const json& j, PermutationTestResult& v);
void to_json(json& j, const SpanVerdict& v);
void to_json(json& j, const FaithfulnessVerdict& v);

// Pretty-printed with a trailing newline.
std::string dump_document(const json& j);

}  // namespace medfuzz
