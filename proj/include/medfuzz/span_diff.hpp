#pragma once

// Word-level diff between an original stem and an attacker-modified stem.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace medfuzz {

struct Word {
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
};

// Maximal runs of non-whitespace.
std::vector<Word> split_words(std::string_view text);
std::size_t count_words(std::string_view text);

struct Insertion {
  // From the first to the last inserted word, inclusive, as it appears in
  // the modified text (inner whitespace kept).
  std::string text;
  std::size_t word_count = 0;
  std::size_t modified_offset = 0;
  // The whitespace-only gap in the original that this run was spliced into,
  // and the full modified text that replaces it.
  std::size_t original_gap_begin = 0;
  std::size_t original_gap_end = 0;
  std::string replacement;
};

struct Deletion {
  std::string text;
  std::size_t word_count = 0;
  std::size_t original_offset = 0;
};

// A gap between matched words whose text changed without losing any
// original word (inserted words and/or different whitespace).
struct GapEdit {
  std::size_t original_begin = 0;
  std::size_t original_end = 0;
  std::string replacement;
};

struct SpanDiff {
  std::vector<Insertion> insertions;
  std::vector<Deletion> deletions;
  std::vector<GapEdit> gap_edits;

  std::size_t inserted_word_count() const;
  std::vector<std::string> inserted_texts() const;
};

// Longest-common-subsequence over whitespace-separated words. Insertions
// come back in order of appearance in the modified text.
SpanDiff diff_words(std::string_view original, std::string_view modified);

inline std::vector<std::string> added_spans(std::string_view original, std::string_view modified) {
  return diff_words(original, modified).inserted_texts();
}

// Splices every gap edit (insertions included) back into `original`. When
// the diff has no deletions this reproduces the modified text exactly.
std::string apply_insertions(std::string_view original, const SpanDiff& diff);

}  // namespace medfuzz
