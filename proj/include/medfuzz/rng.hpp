#pragma once

// Platform-stable randomness. std::shuffle and the std distributions are
// implementation-defined, so everything that has to replay byte-for-byte goes
// through these helpers on top of std::mt19937_64 (whose output is fixed by
// the standard).

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace medfuzz {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, 64-bit.
inline std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Folds a master seed with string and integer labels into a child seed.
// derive_seed(m, {"item-7", "target"}, {rep, turn}) is stable across
// platforms and independent of call order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::string_view> labels,
                                 std::initializer_list<std::uint64_t> indices = {}) noexcept {
  std::uint64_t h = splitmix64(master);
  for (auto label : labels) h = splitmix64(h ^ stable_hash(label));
  for (auto index : indices) h = splitmix64(h ^ splitmix64(index + 0x51ed27ULL));
  return h;
}

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void stable_shuffle(std::vector<T>& v, std::mt19937_64& engine) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_below(engine, i);
    std::swap(v[i - 1], v[j]);
  }
}

// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& engine) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_below(engine, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace medfuzz
