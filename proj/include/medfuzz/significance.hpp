#pragma once

// Control fuzzes and the permutation test for one successful attack.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "medfuzz/corpus.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"
#include "medfuzz/target_probe.hpp"

namespace medfuzz {

using Rational = boost::multiprecision::cpp_rational;

// Exact value of a finite double.
Rational exact_rational(double x);
std::string to_string(const Rational& r);  // "n/d" or "n"
Rational parse_rational(std::string_view text);

struct RejectedCandidate {
  std::string text;
  std::string reason;

  friend bool operator==(const RejectedCandidate&, const RejectedCandidate&) = default;
};

struct ControlFuzz {
  int index = 0;  // 1..M
  BenchmarkItem item;
  std::vector<std::string> added_spans;
  int word_count = 0;  // total inserted words relative to the original stem
  bool accepted = false;
  std::optional<std::string> rejection_reason;  // last reason when not accepted
  std::vector<RejectedCandidate> rejected;

  friend bool operator==(const ControlFuzz&, const ControlFuzz&) = default;
};

// Counts tokens in added text; when set, controls must also match the
// attack's token count.
using TokenCounter = std::function<std::size_t(std::string_view)>;

struct ControlCheck {
  bool accepted = false;
  std::string reason;
  std::vector<std::string> added_spans;
  int word_count = 0;
};

// The accept-reject guard on its own: option block and answer intact,
// inserted word count equal to `target_words`.
ControlCheck check_control(std::string_view reply, const BenchmarkItem& original, int target_words,
                           const TokenCounter& token_counter = {}, std::size_t target_tokens = 0);

struct ControlOptions {
  int max_retries = 5;  // extra attempts after the first
  GenerationParams params;
  std::uint64_t seed = 0;
  TokenCounter token_counter;
};

// Asks the attacker model for a lexical substitution of the attack's added
// text, each attempt in a fresh session. GatewayUnavailableError propagates.
ControlFuzz generate_control_fuzz(Gateway& attacker, const TemplateStore& templates, const BenchmarkItem& original,
                                  const BenchmarkItem& attacked, int index, const ControlOptions& options);

struct PermutationTestResult {
  ProbabilityEstimate p0_hat;
  ProbabilityEstimate pa_hat;
  Rational d_hat_exact;
  double d_hat = 0.0;
  std::vector<ProbabilityEstimate> control_estimates;
  std::vector<Rational> null_exact;
  std::vector<double> null_samples;
  int M = 0;
  int count_ge = 0;
  Rational p_value_exact;
  double p_value = 0.0;
  std::string report_string;
  std::vector<ControlFuzz> controls;
};

// Exact mean of per-generation values.
Rational exact_p_hat(const ProbabilityEstimate& estimate);

// The statistic and p-value from already-estimated probabilities.
void finalize_permutation_test(PermutationTestResult& result);

using ControlGenerator = std::function<ControlFuzz(int index)>;

struct PermutationOptions {
  int M = 30;
  int n_generations = 20;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Estimates p0 on `original`, pa on `attacked` and one p per accepted
// control (controls are requested for indices 1..M). Every estimate uses
// the same generation seeds. Throws InsufficientControlsError when fewer
// than M controls are accepted.
PermutationTestResult permutation_test(ProbabilityEstimator& estimator, const ControlGenerator& controls,
                                       const BenchmarkItem& original, const BenchmarkItem& attacked,
                                       const PermutationOptions& options);

// count == 0 renders "< 1/M"; values are shown to 4 decimal places with
// trailing zeros dropped ("0.1", "0.1667", "< 0.0333").
std::string format_p_value(int count, int M);

}  // namespace medfuzz
