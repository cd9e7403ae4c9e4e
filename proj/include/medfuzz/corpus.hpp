#pragma once

// Multiple-choice benchmark items: loading, validation, and
// answer-preserving option reorderings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace medfuzz {

using Letter = char;

struct BenchmarkItem {
  std::string item_id;
  std::string stem;
  std::map<Letter, std::string> options;
  Letter correct_letter = 'A';
  // Free-form tags. Unknown JSONL fields land here; `has_figure_ref` is set
  // when the stem points at an image the corpus cannot carry.
  nlohmann::json meta = nlohmann::json::object();

  std::vector<Letter> letters() const;
  const std::string& correct_text() const { return options.at(correct_letter); }

  friend bool operator==(const BenchmarkItem&, const BenchmarkItem&) = default;
};

// Throws ItemValidationError naming the first violated rule.
void validate(const BenchmarkItem& item);

// "A, B, C, or D" style enumeration used by the answer prompt.
std::string letter_list(const std::vector<Letter>& letters);

// Stem, blank line, then one "X: text" line per option.
std::string render_item(const BenchmarkItem& item);

// "B: Sickle cell disease"
std::string render_answer(const BenchmarkItem& item);

bool mentions_figure(std::string_view stem);

enum class CorpusFormat { kJsonl, kCsv };

CorpusFormat parse_corpus_format(std::string_view name);
CorpusFormat guess_corpus_format(const std::filesystem::path& path);

// Items in file order. Throws CorpusFormatError (with 1-based line) on parse
// failures and ItemValidationError on invariant violations; never returns a
// partially valid corpus.
std::vector<BenchmarkItem> load_corpus(const std::filesystem::path& path, CorpusFormat format);
std::vector<BenchmarkItem> parse_jsonl(std::string_view text);
std::vector<BenchmarkItem> parse_csv(std::string_view text);

// JSONL record for one item; parse_jsonl(to_jsonl_record(x)) == x.
nlohmann::json to_jsonl_record(const BenchmarkItem& item);

// ---- option permutations -----------------------------------------------

struct OptionPermutation {
  std::map<Letter, Letter> mapping;  // original letter -> display letter
  std::uint64_t seed = 0;

  static OptionPermutation identity(const std::vector<Letter>& letters);
  bool is_identity() const;
  Letter display_of(Letter original) const;
  OptionPermutation inverse() const;

  friend bool operator==(const OptionPermutation&, const OptionPermutation&) = default;
};

// Same (item_id, seed) always yields the same permutation.
std::pair<BenchmarkItem, OptionPermutation> permute_options(const BenchmarkItem& item, std::uint64_t seed);

// Applies an explicit permutation. Throws MappingError if it is not a
// bijection over the item's letters.
BenchmarkItem apply_permutation(const BenchmarkItem& item, const OptionPermutation& perm);

// Display letter back to the original letter. Throws MappingError when the
// letter is outside the permutation's codomain.
Letter canonical_answer(Letter display_letter, const OptionPermutation& perm);

}  // namespace medfuzz
