#include "medfuzz/serialize.hpp"

#include <fmt/format.h>

#include "medfuzz/errors.hpp"

namespace medfuzz {
namespace {

std::string letter_str(Letter l) { return std::string(1, l); }

Letter letter_of(const json& j) {
  auto s = j.get<std::string>();
  if (s.size() != 1) throw ProtocolError(fmt::format("expected a single letter, got '{}'", s));
  return s[0];
}

template <typename T>
std::optional<T> opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const BenchmarkItem& v) {
  json options = json::object();
  for (const auto& [letter, text] : v.options) options[letter_str(letter)] = text;
  j = json{{"item_id", v.item_id},
           {"stem", v.stem},
           {"options", options},
           {"correct_letter", letter_str(v.correct_letter)},
           {"meta", v.meta}};
}

void from_json(const json& j, BenchmarkItem& v) {
  v.item_id = j.at("item_id").get<std::string>();
  v.stem = j.at("stem").get<std::string>();
  v.options.clear();
  for (const auto& [k, text] : j.at("options").items()) {
    if (k.size() != 1) throw ProtocolError(fmt::format("bad option letter '{}'", k));
    v.options[k[0]] = text.get<std::string>();
  }
  v.correct_letter = letter_of(j.at("correct_letter"));
  v.meta = j.value("meta", json::object());
}

void to_json(json& j, const ChatMessage& v) { j = json{{"role", to_string(v.role)}, {"content", v.content}}; }

void from_json(const json& j, ChatMessage& v) {
  v.role = parse_role(j.at("role").get<std::string>());
  v.content = j.at("content").get<std::string>();
}

void to_json(json& j, const GenerationParams& v) {
  j = json{{"temperature", v.temperature},
           {"max_tokens", v.max_tokens},
           {"logprobs_requested", v.logprobs_requested},
           {"top_logprobs", v.top_logprobs},
           {"seed_hint", v.seed_hint ? json(*v.seed_hint) : json(nullptr)}};
}

void from_json(const json& j, GenerationParams& v) {
  GenerationParams d;
  v.temperature = j.value("temperature", d.temperature);
  v.max_tokens = j.value("max_tokens", d.max_tokens);
  v.logprobs_requested = j.value("logprobs_requested", d.logprobs_requested);
  v.top_logprobs = j.value("top_logprobs", d.top_logprobs);
  v.seed_hint = opt<std::int64_t>(j, "seed_hint");
}

void to_json(json& j, const TargetResponse& v) {
  json conf = json::object();
  for (const auto& [letter, score] : v.confidences) conf[letter_str(letter)] = score;
  j = json{{"cot", v.cot},
           {"confidences", conf},
           {"answer_letter", v.answer_letter ? json(letter_str(v.answer_letter)) : json(nullptr)},
           {"raw_answer_text", v.raw_answer_text},
           {"raw_confidence_text", v.raw_confidence_text},
           {"error", v.error ? json(to_string(*v.error)) : json(nullptr)}};
}

void from_json(const json& j, TargetResponse& v) {
  v.cot = j.at("cot").get<std::string>();
  v.confidences.clear();
  for (const auto& [k, score] : j.at("confidences").items()) v.confidences[k.at(0)] = score.get<int>();
  v.answer_letter = j.at("answer_letter").is_null() ? Letter{0} : letter_of(j.at("answer_letter"));
  v.raw_answer_text = j.value("raw_answer_text", "");
  v.raw_confidence_text = j.value("raw_confidence_text", "");
  auto err = opt<std::string>(j, "error");
  v.error = err ? std::optional(parse_probe_error(*err)) : std::nullopt;
}

void to_json(json& j, const ProbabilityEstimate& v) {
  j = json{{"p_hat", v.p_hat},
           {"n_generations", v.n_generations},
           {"method", to_string(v.method)},
           {"per_generation", v.per_generation},
           {"n_skipped", v.n_skipped}};
}

void from_json(const json& j, ProbabilityEstimate& v) {
  v.p_hat = j.at("p_hat").get<double>();
  v.n_generations = j.at("n_generations").get<int>();
  v.method = parse_estimate_method(j.at("method").get<std::string>());
  v.per_generation = j.at("per_generation").get<std::vector<double>>();
  v.n_skipped = j.value("n_skipped", 0);
}

void to_json(json& j, const AttackTurn& v) {
  j = json{{"turn_index", v.turn_index},
           {"postmortem", v.postmortem},
           {"attack_plan", v.attack_plan},
           {"modified_item", v.modified_item},
           {"target_response", v.target_response},
           {"added_spans", v.added_spans},
           {"warnings", v.warnings},
           {"extraction_retries", v.extraction_retries}};
}

void from_json(const json& j, AttackTurn& v) {
  v.turn_index = j.at("turn_index").get<int>();
  v.postmortem = j.value("postmortem", "");
  v.attack_plan = j.at("attack_plan").get<std::string>();
  v.modified_item = j.at("modified_item").get<BenchmarkItem>();
  v.target_response = j.at("target_response").get<TargetResponse>();
  v.added_spans = j.at("added_spans").get<std::vector<std::string>>();
  v.warnings = j.value("warnings", std::vector<std::string>{});
  v.extraction_retries = j.value("extraction_retries", 0);
}

void to_json(json& j, const AttackTrajectory& v) {
  j = json{{"item_id", v.item_id},
           {"replicate_index", v.replicate_index},
           {"original_item", v.original_item},
           {"baseline_response", v.baseline_response ? json(*v.baseline_response) : json(nullptr)},
           {"turns", v.turns},
           {"outcome", v.outcome ? json(to_string(*v.outcome)) : json(nullptr)},
           {"success_turn", v.success_turn ? json(*v.success_turn) : json(nullptr)},
           {"attacker_messages", v.attacker_messages},
           {"status", to_string(v.status)},
           {"error_detail", v.error_detail}};
}

void from_json(const json& j, AttackTrajectory& v) {
  v.item_id = j.at("item_id").get<std::string>();
  v.replicate_index = j.at("replicate_index").get<int>();
  v.original_item = j.at("original_item").get<BenchmarkItem>();
  v.baseline_response = opt<TargetResponse>(j, "baseline_response");
  v.turns = j.at("turns").get<std::vector<AttackTurn>>();
  auto outcome = opt<std::string>(j, "outcome");
  v.outcome = outcome ? std::optional(parse_outcome(*outcome)) : std::nullopt;
  v.success_turn = opt<int>(j, "success_turn");
  v.attacker_messages = j.at("attacker_messages").get<std::vector<ChatMessage>>();
  v.status = parse_trajectory_status(j.at("status").get<std::string>());
  v.error_detail = j.value("error_detail", "");
}

void to_json(json& j, const ReplicateResult& v) {
  j = json{{"item_id", v.item_id},
           {"replicate_index", v.replicate_index},
           {"outcome", to_string(v.outcome)},
           {"success_turn", v.success_turn ? json(*v.success_turn) : json(nullptr)},
           {"final_correct", v.final_correct ? json(*v.final_correct) : json(nullptr)}};
}

void to_json(json& j, const ControlFuzz& v) {
  json rejected = json::array();
  for (const auto& r : v.rejected) rejected.push_back({{"text", r.text}, {"reason", r.reason}});
  j = json{{"index", v.index},
           {"item", v.item},
           {"added_spans", v.added_spans},
           {"word_count", v.word_count},
           {"accepted", v.accepted},
           {"rejection_reason", v.rejection_reason ? json(*v.rejection_reason) : json(nullptr)},
           {"rejected", rejected}};
}

void from_json(const json& j, ControlFuzz& v) {
  v.index = j.at("index").get<int>();
  v.item = j.at("item").get<BenchmarkItem>();
  v.added_spans = j.at("added_spans").get<std::vector<std::string>>();
  v.word_count = j.at("word_count").get<int>();
  v.accepted = j.at("accepted").get<bool>();
  v.rejection_reason = opt<std::string>(j, "rejection_reason");
  v.rejected.clear();
  for (const auto& r : j.value("rejected", json::array())) {
    v.rejected.push_back({r.at("text").get<std::string>(), r.at("reason").get<std::string>()});
  }
}

void to_json(json& j, const PermutationTestResult& v) {
  std::vector<std::string> null_exact;
  for (const auto& r : v.null_exact) null_exact.push_back(to_string(r));
  j = json{{"p0_hat", v.p0_hat},
           {"pa_hat", v.pa_hat},
           {"d_hat", v.d_hat},
           {"d_hat_exact", to_string(v.d_hat_exact)},
           {"control_estimates", v.control_estimates},
           {"null_samples", v.null_samples},
           {"null_exact", null_exact},
           {"M", v.M},
           {"count_ge", v.count_ge},
           {"p_value", v.p_value},
           {"p_value_exact", to_string(v.p_value_exact)},
           {"report_string", v.report_string},
           {"controls", v.controls}};
}

void from_json(const json& j, PermutationTestResult& v) {
  v.p0_hat = j.at("p0_hat").get<ProbabilityEstimate>();
  v.pa_hat = j.at("pa_hat").get<ProbabilityEstimate>();
  v.d_hat = j.at("d_hat").get<double>();
  v.d_hat_exact = parse_rational(j.at("d_hat_exact").get<std::string>());
  v.control_estimates = j.at("control_estimates").get<std::vector<ProbabilityEstimate>>();
  v.null_samples = j.at("null_samples").get<std::vector<double>>();
  v.null_exact.clear();
  for (const auto& s : j.at("null_exact")) v.null_exact.push_back(parse_rational(s.get<std::string>()));
  v.M = j.at("M").get<int>();
  v.count_ge = j.at("count_ge").get<int>();
  v.p_value = j.at("p_value").get<double>();
  v.p_value_exact = parse_rational(j.at("p_value_exact").get<std::string>());
  v.report_string = j.at("report_string").get<std::string>();
  v.controls = j.at("controls").get<std::vector<ControlFuzz>>();
}

void to_json(json& j, const SpanVerdict& v) {
  j = json{{"span", v.span},
           {"mentioned", v.mentioned},
           {"method", to_string(v.method)},
           {"evidence", v.evidence ? json(*v.evidence) : json(nullptr)}};
}

void to_json(json& j, const FaithfulnessVerdict& v) {
  j = json{{"item_id", v.item_id},
           {"replicate_index", v.replicate_index},
           {"verdicts", v.verdicts},
           {"mentions_none", v.mentions_none},
           {"omits_at_least_one", v.omits_at_least_one}};
}

std::string dump_document(const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n"; }

}  // namespace medfuzz
