#include "medfuzz/target_probe.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/rng.hpp"

namespace medfuzz {
namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Letter upper(char c) { return static_cast<Letter>(std::toupper(static_cast<unsigned char>(c))); }

bool contains(const std::vector<Letter>& letters, Letter l) {
  return std::find(letters.begin(), letters.end(), l) != letters.end();
}

std::int64_t seed_hint_of(std::uint64_t seed) { return static_cast<std::int64_t>(seed & 0x7fffffffffffffffULL); }

}  // namespace

std::string_view to_string(ProbeError e) {
  switch (e) {
    case ProbeError::kUnparseableAnswer:
      return "unparseable_answer";
    case ProbeError::kUnparseableConfidence:
      return "unparseable_confidence";
    case ProbeError::kContentFilter:
      return "content_filter";
    case ProbeError::kGatewayFailure:
      return "gateway_failure";
  }
  return "gateway_failure";
}

ProbeError parse_probe_error(std::string_view name) {
  if (name == "unparseable_answer") return ProbeError::kUnparseableAnswer;
  if (name == "unparseable_confidence") return ProbeError::kUnparseableConfidence;
  if (name == "content_filter") return ProbeError::kContentFilter;
  if (name == "gateway_failure") return ProbeError::kGatewayFailure;
  throw ProtocolError(fmt::format("unknown probe error '{}'", name));
}

std::string_view to_string(EstimateMethod m) { return m == EstimateMethod::kLogprobMean ? "logprob_mean" : "sample_mean"; }

EstimateMethod parse_estimate_method(std::string_view name) {
  if (name == "logprob_mean") return EstimateMethod::kLogprobMean;
  if (name == "sample_mean") return EstimateMethod::kSampleMean;
  throw ProtocolError(fmt::format("unknown estimate method '{}'", name));
}

ProbabilityEstimate make_estimate(std::vector<double> values, EstimateMethod method, int n_skipped) {
  if (values.empty()) throw EstimationError("no successful generations to estimate from");
  ProbabilityEstimate est;
  est.method = method;
  est.n_generations = static_cast<int>(values.size());
  est.p_hat = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  est.per_generation = std::move(values);
  est.n_skipped = n_skipped;
  return est;
}

// ---- parsing ------------------------------------------------------------

std::optional<Letter> parse_answer_letter(std::string_view text, const std::vector<Letter>& letters) {
  std::string_view t = trim(text);
  if (t.size() == 1 && contains(letters, t[0])) return t[0];

  std::set<Letter> tokens;
  std::size_t i = 0;
  while (i < t.size()) {
    while (i < t.size() && !std::isalnum(static_cast<unsigned char>(t[i]))) ++i;
    std::size_t j = i;
    while (j < t.size() && std::isalnum(static_cast<unsigned char>(t[j]))) ++j;
    if (j == i + 1 && contains(letters, upper(t[i]))) tokens.insert(upper(t[i]));
    i = j;
  }
  if (tokens.size() == 1) return *tokens.begin();

  static const std::regex kAnswerIs(R"(answer\s*(?:is|:)\s*[:\-]?\s*(?:option\s*)?[\(\[\*"']*([A-Za-z])(?![A-Za-z]))",
                                    std::regex::icase);
  std::set<Letter> stated;
  std::string s(t);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kAnswerIs); it != std::sregex_iterator(); ++it) {
    Letter l = upper((*it)[1].str()[0]);
    if (contains(letters, l)) stated.insert(l);
  }
  if (stated.size() == 1) return *stated.begin();
  return std::nullopt;
}

std::optional<std::map<Letter, int>> parse_confidences(std::string_view text, const std::vector<Letter>& letters) {
  std::string s;
  for (char c : text) {
    if (c != '*') s.push_back(c);
  }
  static const std::regex kPair(R"((?:^|[^A-Za-z0-9])([A-Za-z])\s*[:\-]\s*([0-9]+)(?![0-9]))");
  std::map<Letter, int> out;
  bool any = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kPair); it != std::sregex_iterator(); ++it) {
    any = true;
    Letter l = (*it)[1].str()[0];
    int score = std::stoi((*it)[2].str().substr(0, 3));
    if (!contains(letters, l) || score < 1 || score > 5 || out.contains(l)) return std::nullopt;
    out[l] = score;
  }
  if (any) {
    if (out.size() != letters.size()) return std::nullopt;
    return out;
  }

  std::vector<int> bare;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c) || c == ',' || c == ';') {
      ++i;
      continue;
    }
    if (!std::isdigit(c)) return std::nullopt;
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j - i > 1) return std::nullopt;
    bare.push_back(s[i] - '0');
    i = j;
  }
  if (bare.size() != letters.size()) return std::nullopt;
  for (std::size_t k = 0; k < bare.size(); ++k) {
    if (bare[k] < 1 || bare[k] > 5) return std::nullopt;
    out[letters[k]] = bare[k];
  }
  return out;
}

// ---- TargetProbe --------------------------------------------------------

TargetProbe::TargetProbe(Gateway& gateway, const TemplateStore& templates, ProbeConfig config)
    : gateway_(gateway), templates_(templates), config_(std::move(config)) {
  config_.params.validate();
}

std::vector<IclExemplar> TargetProbe::draw_exemplars(const BenchmarkItem& item, std::uint64_t seed) const {
  if (config_.exemplar_count == 0 || config_.exemplar_pool.empty()) return {};
  std::vector<const IclExemplar*> eligible;
  for (const auto& ex : config_.exemplar_pool) {
    if (ex.item.item_id != item.item_id && ex.item.stem != item.stem) eligible.push_back(&ex);
  }
  std::mt19937_64 engine(derive_seed(seed, {item.item_id, "icl-exemplars"}));
  std::vector<IclExemplar> out;
  for (std::size_t idx : sample_indices(eligible.size(), config_.exemplar_count, engine)) out.push_back(*eligible[idx]);
  return out;
}

TargetProbe::Transcript TargetProbe::run_until_answer(const BenchmarkItem& display_item, std::uint64_t seed) {
  GenerationParams params = config_.params;
  params.seed_hint = seed_hint_of(seed);
  params.logprobs_requested = false;
  Transcript t{build_target_dialog(templates_, display_item, draw_exemplars(display_item, seed), params,
                                   gateway_.backend_id()),
               {}};
  const auto letters = display_item.letters();

  auto step = [&](std::string& into) -> bool {
    GenerationResult r = gateway_.generate(t.session);
    if (r.finish_reason == FinishReason::kContentFilter) {
      t.response.error = ProbeError::kContentFilter;
      return false;
    }
    if (trim(r.text).empty()) {
      t.response.error =
          r.finish_reason == FinishReason::kError ? ProbeError::kGatewayFailure : ProbeError::kUnparseableAnswer;
      return false;
    }
    into = std::move(r.text);
    return true;
  };

  try {
    if (!step(t.response.cot)) return t;
    t.session.assistant(t.response.cot);
    t.session.user(templates_.render(TemplateId::kTargetConfidence, {}));
    if (!step(t.response.raw_confidence_text)) return t;
    t.session.assistant(t.response.raw_confidence_text);
    if (auto conf = parse_confidences(t.response.raw_confidence_text, letters)) {
      t.response.confidences = std::move(*conf);
    } else {
      t.response.error = ProbeError::kUnparseableConfidence;
    }
    t.session.user(templates_.render(TemplateId::kTargetAnswer, {{"letter_list", letter_list(letters)}}));
  } catch (const ProtocolError& e) {
    spdlog::warn("target probe protocol failure: {}", e.what());
    t.response.error = ProbeError::kGatewayFailure;
  }
  return t;
}

TargetResponse TargetProbe::probe(const BenchmarkItem& item, std::uint64_t seed) {
  OptionPermutation perm = OptionPermutation::identity(item.letters());
  BenchmarkItem display = item;
  if (config_.permute_options) std::tie(display, perm) = permute_options(item, seed);

  Transcript t = run_until_answer(display, seed);
  TargetResponse& resp = t.response;
  if (resp.error && resp.error != ProbeError::kUnparseableConfidence) return resp;

  try {
    GenerationResult r = gateway_.generate(t.session);
    resp.raw_answer_text = r.text;
    if (r.finish_reason == FinishReason::kContentFilter) {
      resp.error = ProbeError::kContentFilter;
    } else if (auto letter = parse_answer_letter(r.text, display.letters())) {
      resp.answer_letter = canonical_answer(*letter, perm);
    } else if (!resp.error) {
      resp.error = ProbeError::kUnparseableAnswer;
    }
  } catch (const ProtocolError& e) {
    spdlog::warn("target probe protocol failure: {}", e.what());
    resp.error = ProbeError::kGatewayFailure;
  }

  std::map<Letter, int> canonical;
  for (const auto& [display_letter, score] : resp.confidences) canonical[canonical_answer(display_letter, perm)] = score;
  resp.confidences = std::move(canonical);
  return resp;
}

ProbabilityEstimate TargetProbe::estimate_p(const BenchmarkItem& item, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw EstimationError("estimate_p needs at least one generation");
  const bool use_logprobs = gateway_.supports_logprobs();
  std::vector<double> values;
  int skipped = 0;
  for (std::uint64_t seed : seeds) {
    auto [display, perm] = permute_options(item, seed);
    try {
      Transcript t = run_until_answer(display, seed);
      if (t.response.error && t.response.error != ProbeError::kUnparseableConfidence) {
        spdlog::debug("estimate_p: generation {} skipped ({})", seed, to_string(*t.response.error));
        ++skipped;
        continue;
      }
      if (use_logprobs) {
        auto dist = letter_distribution(gateway_, t.session, display.letters(), config_.letter_options);
        values.push_back(dist.at(display.correct_letter));
      } else {
        GenerationResult r = gateway_.generate(t.session);
        auto letter = r.finish_reason == FinishReason::kContentFilter ? std::nullopt
                                                                       : parse_answer_letter(r.text, display.letters());
        if (!letter) {
          ++skipped;
          continue;
        }
        values.push_back(*letter == display.correct_letter ? 1.0 : 0.0);
      }
    } catch (const GatewayUnavailableError&) {
      throw;
    } catch (const Error& e) {
      spdlog::warn("estimate_p: generation {} failed: {}", seed, e.what());
      ++skipped;
    }
  }
  if (values.empty()) {
    throw EstimationError(fmt::format("all {} generations failed for item '{}'", seeds.size(), item.item_id));
  }
  return make_estimate(std::move(values), use_logprobs ? EstimateMethod::kLogprobMean : EstimateMethod::kSampleMean,
                       skipped);
}

}  // namespace medfuzz
