#include "medfuzz/significance.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/rng.hpp"
#include "medfuzz/span_diff.hpp"

namespace medfuzz {
namespace {

using boost::multiprecision::cpp_int;

// Runs fn(0..n-1) on up to `workers` threads; the first exception wins.
template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, n); ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace

Rational exact_rational(double x) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite value has no exact rational");
  int exp = 0;
  double mant = std::frexp(x, &exp);  // x = mant * 2^exp, |mant| in [0.5, 1)
  auto m = static_cast<std::int64_t>(std::ldexp(mant, 53));
  exp -= 53;
  Rational r{cpp_int(m)};
  if (exp > 0) {
    r *= Rational(cpp_int(1) << exp);
  } else if (exp < 0) {
    r /= Rational(cpp_int(1) << -exp);
  }
  return r;
}

std::string to_string(const Rational& r) {
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

Rational parse_rational(std::string_view text) {
  try {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return Rational(cpp_int(std::string(text)));
    return Rational(cpp_int(std::string(text.substr(0, slash))), cpp_int(std::string(text.substr(slash + 1))));
  } catch (const std::exception&) {
    throw ProtocolError(fmt::format("bad rational '{}'", text));
  }
}

// ---- controls -----------------------------------------------------------

ControlCheck check_control(std::string_view reply, const BenchmarkItem& original, int target_words,
                           const TokenCounter& token_counter, std::size_t target_tokens) {
  ControlCheck c;
  BenchmarkItem candidate;
  try {
    candidate = extract_modified_item(reply, original);
  } catch (const ExtractionError& e) {
    c.reason = e.reason();
    return c;
  }
  if (candidate.correct_letter != original.correct_letter || candidate.options != original.options) {
    c.reason = "answer-region-modified";
    return c;
  }
  SpanDiff diff = diff_words(original.stem, candidate.stem);
  c.added_spans = diff.inserted_texts();
  c.word_count = static_cast<int>(diff.inserted_word_count());
  if (c.word_count != target_words) {
    c.reason = fmt::format("word-count-mismatch: {} added words, attack added {}", c.word_count, target_words);
    return c;
  }
  if (token_counter) {
    std::size_t tokens = 0;
    for (const auto& span : c.added_spans) tokens += token_counter(span);
    if (tokens != target_tokens) {
      c.reason = fmt::format("token-count-mismatch: {} added tokens, attack added {}", tokens, target_tokens);
      return c;
    }
  }
  c.accepted = true;
  return c;
}

ControlFuzz generate_control_fuzz(Gateway& attacker, const TemplateStore& templates, const BenchmarkItem& original,
                                  const BenchmarkItem& attacked, int index, const ControlOptions& options) {
  SpanDiff attack = diff_words(original.stem, attacked.stem);
  if (attack.insertions.empty()) throw NotApplicableError("attacked item adds no text to the original");
  const int target_words = static_cast<int>(attack.inserted_word_count());
  std::size_t target_tokens = 0;
  if (options.token_counter) {
    for (const auto& span : attack.inserted_texts()) target_tokens += options.token_counter(span);
  }
  const std::string prompt = templates.render(TemplateId::kControlFuzz, {{"original_item", render_item(original)},
                                                                        {"modified_item", render_item(attacked)},
                                                                        {"correct_answer", render_answer(original)}});

  ControlFuzz out;
  out.index = index;
  out.item = original;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    DialogSession session(attacker.backend_id(), options.params);
    session.params().seed_hint = static_cast<std::int64_t>(
        derive_seed(options.seed, {original.item_id, "control"},
                    {static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(attempt)}) >>
        1);
    session.system(templates.render(TemplateId::kAttackerSystem, {}));
    session.user(prompt);

    GenerationResult r;
    try {
      r = attacker.generate(session);
    } catch (const ProtocolError& e) {
      out.rejected.push_back({"", fmt::format("protocol-error: {}", e.what())});
      continue;
    }
    if (r.finish_reason == FinishReason::kContentFilter) {
      out.rejected.push_back({r.text, "content-filter"});
      continue;
    }
    ControlCheck check = check_control(r.text, original, target_words, options.token_counter, target_tokens);
    if (!check.accepted) {
      out.rejected.push_back({r.text, check.reason});
      continue;
    }
    out.item = extract_modified_item(r.text, original);
    out.added_spans = std::move(check.added_spans);
    out.word_count = check.word_count;
    out.accepted = true;
    return out;
  }
  out.rejection_reason = out.rejected.empty() ? "no attempts" : out.rejected.back().reason;
  return out;
}

// ---- permutation test ---------------------------------------------------

Rational exact_p_hat(const ProbabilityEstimate& estimate) {
  if (estimate.per_generation.empty()) return exact_rational(estimate.p_hat);
  Rational sum = 0;
  for (double v : estimate.per_generation) sum += exact_rational(v);
  return sum / static_cast<long>(estimate.per_generation.size());
}

std::string format_p_value(int count, int M) {
  if (M < 1 || count < 0 || count > M) throw std::invalid_argument(fmt::format("bad p-value count {}/{}", count, M));
  const int num = count == 0 ? 1 : count;
  // Half-up rounding to 4 decimals in integer arithmetic.
  const long long scaled = (2LL * num * 10000 + M) / (2LL * M);
  std::string body;
  if (scaled == 0) {
    body = fmt::format("{:.4g}", static_cast<double>(num) / M);
  } else {
    body = fmt::format("{}.{:04d}", scaled / 10000, scaled % 10000);
    while (body.back() == '0') body.pop_back();
    if (body.back() == '.') body.pop_back();
  }
  return count == 0 ? "< " + body : body;
}

void finalize_permutation_test(PermutationTestResult& r) {
  const Rational p0 = exact_p_hat(r.p0_hat);
  const Rational pa = exact_p_hat(r.pa_hat);
  r.d_hat_exact = abs(pa - p0);
  r.d_hat = static_cast<double>(r.d_hat_exact);
  r.null_exact.clear();
  r.null_samples.clear();
  r.count_ge = 0;
  for (const auto& est : r.control_estimates) {
    Rational d = abs(exact_p_hat(est) - p0);
    if (d >= r.d_hat_exact) ++r.count_ge;
    r.null_samples.push_back(static_cast<double>(d));
    r.null_exact.push_back(std::move(d));
  }
  r.M = static_cast<int>(r.control_estimates.size());
  if (r.M == 0) throw InsufficientControlsError(0, 1);
  r.p_value_exact = Rational(r.count_ge, r.M);
  r.p_value = static_cast<double>(r.p_value_exact);
  r.report_string = format_p_value(r.count_ge, r.M);
}

PermutationTestResult permutation_test(ProbabilityEstimator& estimator, const ControlGenerator& controls,
                                       const BenchmarkItem& original, const BenchmarkItem& attacked,
                                       const PermutationOptions& options) {
  if (options.M < 1) throw ConfigError("M must be >= 1");
  if (options.n_generations < 1) throw ConfigError("n_generations must be >= 1");
  if (attacked.correct_letter != original.correct_letter || attacked.options != original.options) {
    throw NotApplicableError("attacked item does not preserve the original options and answer");
  }
  std::vector<std::uint64_t> seeds;
  for (int g = 0; g < options.n_generations; ++g) {
    seeds.push_back(derive_seed(options.seed, {original.item_id, "estimate"}, {static_cast<std::uint64_t>(g)}));
  }

  PermutationTestResult r;
  r.controls.resize(static_cast<std::size_t>(options.M));
  parallel_for(options.M, options.workers, [&](int i) { r.controls[static_cast<std::size_t>(i)] = controls(i + 1); });
  int accepted = 0;
  for (const auto& c : r.controls) accepted += c.accepted ? 1 : 0;
  if (accepted < options.M) throw InsufficientControlsError(accepted, options.M);

  r.p0_hat = estimator.estimate_p(original, seeds);
  r.pa_hat = estimator.estimate_p(attacked, seeds);
  r.control_estimates.resize(r.controls.size());
  parallel_for(options.M, options.workers, [&](int i) {
    auto idx = static_cast<std::size_t>(i);
    r.control_estimates[idx] = estimator.estimate_p(r.controls[idx].item, seeds);
  });
  finalize_permutation_test(r);
  return r;
}

}  // namespace medfuzz
