#pragma once

// The three-turn target protocol (chain of thought, per-option confidence,
// final letter) and estimation of the probability that the target picks
// the correct option.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfuzz/corpus.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"

namespace medfuzz {

enum class ProbeError { kUnparseableAnswer, kUnparseableConfidence, kContentFilter, kGatewayFailure };

std::string_view to_string(ProbeError e);
ProbeError parse_probe_error(std::string_view name);

struct TargetResponse {
  std::string cot;
  std::map<Letter, int> confidences;  // original letters, scores 1..5
  Letter answer_letter = 0;           // original letter
  std::string raw_answer_text;
  std::string raw_confidence_text;
  std::optional<ProbeError> error;

  bool ok() const { return !error.has_value(); }
  friend bool operator==(const TargetResponse&, const TargetResponse&) = default;
};

enum class EstimateMethod { kLogprobMean, kSampleMean };

std::string_view to_string(EstimateMethod m);
EstimateMethod parse_estimate_method(std::string_view name);

struct ProbabilityEstimate {
  double p_hat = 0.0;
  int n_generations = 0;
  EstimateMethod method = EstimateMethod::kLogprobMean;
  std::vector<double> per_generation;
  int n_skipped = 0;
};

// Mean of `values`; throws EstimationError when empty.
ProbabilityEstimate make_estimate(std::vector<double> values, EstimateMethod method, int n_skipped = 0);

// Parse ladder: exact letter, then a unique single-letter token once
// punctuation and markup are stripped, then a unique "answer is X".
std::optional<Letter> parse_answer_letter(std::string_view text, const std::vector<Letter>& letters);

// Accepts "A: 2", "A - 2" (any separators between entries) or bare scores
// "2 5 1 1" aligned to option order. Requires exactly one score per letter.
std::optional<std::map<Letter, int>> parse_confidences(std::string_view text, const std::vector<Letter>& letters);

class ProbabilityEstimator {
 public:
  virtual ~ProbabilityEstimator() = default;
  // One generation per seed. Throws EstimationError when every generation
  // fails.
  virtual ProbabilityEstimate estimate_p(const BenchmarkItem& item, std::span<const std::uint64_t> seeds) = 0;
};

struct ProbeConfig {
  GenerationParams params;
  // Reorder options (seeded) in probe(); estimate_p always reorders.
  bool permute_options = false;
  std::size_t exemplar_count = 0;
  std::vector<IclExemplar> exemplar_pool;
  LetterDistributionOptions letter_options;
};

class TargetProbe : public ProbabilityEstimator {
 public:
  TargetProbe(Gateway& gateway, const TemplateStore& templates, ProbeConfig config = {});

  // Fresh session per call. Parse and content-filter problems are reported
  // through TargetResponse::error; only GatewayUnavailableError escapes.
  TargetResponse probe(const BenchmarkItem& item, std::uint64_t seed);

  ProbabilityEstimate estimate_p(const BenchmarkItem& item, std::span<const std::uint64_t> seeds) override;

  std::vector<IclExemplar> draw_exemplars(const BenchmarkItem& item, std::uint64_t seed) const;

  const ProbeConfig& config() const { return config_; }

 private:
  struct Transcript {
    DialogSession session;
    TargetResponse response;  // cot/confidences in display letters
  };
  // Runs the chain-of-thought and confidence turns and appends the
  // final-answer user turn.
  Transcript run_until_answer(const BenchmarkItem& display_item, std::uint64_t seed);

  Gateway& gateway_;
  const TemplateStore& templates_;
  ProbeConfig config_;
};

}  // namespace medfuzz
