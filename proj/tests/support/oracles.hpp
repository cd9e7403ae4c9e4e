#pragma once

// Test-only reference implementations. They share no code with the library:
// rationals come from GMP, tokenization from iostreams.

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include <gmpxx.h>

namespace oracle {

inline mpq_class exact(double x) { return mpq_class(x); }  // mpq_set_d is exact

inline std::string str(const mpq_class& q) {
  mpq_class c = q;
  c.canonicalize();
  return c.get_str();
}

inline mpq_class mean(const std::vector<double>& values) {
  mpq_class sum = 0;
  for (double v : values) sum += exact(v);
  return sum / mpq_class(static_cast<long>(values.size()));
}

inline mpq_class abs_diff(const mpq_class& a, const mpq_class& b) { return a >= b ? mpq_class(a - b) : mpq_class(b - a); }

struct PermutationOracle {
  mpq_class d_hat;
  std::vector<mpq_class> null;
  long count = 0;
  mpq_class p_value;
};

// Brute-force statistic and p-value: d = |pa - p0|, p = #{d_i >= d} / M.
inline PermutationOracle permutation(const std::vector<double>& p0_values, const std::vector<double>& pa_values,
                                     const std::vector<std::vector<double>>& control_values) {
  PermutationOracle out;
  const mpq_class p0 = mean(p0_values);
  out.d_hat = abs_diff(mean(pa_values), p0);
  for (const auto& c : control_values) {
    mpq_class d = abs_diff(mean(c), p0);
    if (d >= out.d_hat) ++out.count;
    out.null.push_back(d);
  }
  out.p_value = mpq_class(out.count, static_cast<long>(control_values.size()));
  out.p_value.canonicalize();
  return out;
}

// 1/M written with four decimals, rounding half up, trailing zeros dropped.
inline std::string four_decimals(long num, long den) {
  // value * 10^4 rounded half up
  mpz_class scaled = (mpz_class(num) * 20000 + den) / (mpz_class(den) * 2);
  std::string digits = scaled.get_str();
  while (digits.size() < 5) digits.insert(digits.begin(), '0');
  std::string out = digits.substr(0, digits.size() - 4) + "." + digits.substr(digits.size() - 4);
  while (out.back() == '0') out.pop_back();
  if (out.back() == '.') out.pop_back();
  return out;
}

inline std::size_t whitespace_words(const std::string& text) {
  std::istringstream in(text);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

// Fraction of valid replicate outcomes that are correct, pooled over items.
inline double micro_average(const std::vector<std::vector<int>>& per_item_correct) {
  long hits = 0, total = 0;
  for (const auto& v : per_item_correct) {
    for (int c : v) {
      hits += c;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace oracle
