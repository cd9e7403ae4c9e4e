#include "medfuzz/span_diff.hpp"

#include <cctype>
#include <cstdint>

namespace medfuzz {

std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    words.push_back({i, j});
    i = j;
  }
  return words;
}

std::size_t count_words(std::string_view text) { return split_words(text).size(); }

std::size_t SpanDiff::inserted_word_count() const {
  std::size_t n = 0;
  for (const auto& ins : insertions) n += ins.word_count;
  return n;
}

std::vector<std::string> SpanDiff::inserted_texts() const {
  std::vector<std::string> out;
  out.reserve(insertions.size());
  for (const auto& ins : insertions) out.push_back(ins.text);
  return out;
}

SpanDiff diff_words(std::string_view original, std::string_view modified) {
  const auto a = split_words(original);
  const auto b = split_words(modified);
  const std::size_t n = a.size(), m = b.size();
  auto word = [](std::string_view text, const Word& w) { return text.substr(w.begin, w.end - w.begin); };

  // lcs[i][j] = LCS length of a[i..] and b[j..]
  std::vector<std::uint32_t> lcs((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return lcs[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      at(i, j) = word(original, a[i]) == word(modified, b[j]) ? at(i + 1, j + 1) + 1
                                                              : std::max(at(i + 1, j), at(i, j + 1));
    }
  }

  // Walk forward; matched pairs anchor the gaps between runs.
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  for (std::size_t i = 0, j = 0; i < n && j < m;) {
    if (word(original, a[i]) == word(modified, b[j])) {
      matches.emplace_back(i, j);
      ++i;
      ++j;
    } else if (at(i + 1, j) >= at(i, j + 1)) {
      ++i;
    } else {
      ++j;
    }
  }

  SpanDiff diff;
  std::size_t prev_i = 0, prev_j = 0;  // first unmatched index after the previous anchor
  auto flush_gap = [&](std::size_t next_i, std::size_t next_j) {
    // Original gap: end of previous matched word to start of next matched word.
    std::size_t orig_gap_begin = prev_i == 0 ? 0 : a[prev_i - 1].end;
    std::size_t orig_gap_end = next_i < n ? a[next_i].begin : original.size();
    std::size_t mod_gap_begin = prev_j == 0 ? 0 : b[prev_j - 1].end;
    std::size_t mod_gap_end = next_j < m ? b[next_j].begin : modified.size();

    if (next_i > prev_i) {
      diff.deletions.push_back({std::string(original.substr(a[prev_i].begin, a[next_i - 1].end - a[prev_i].begin)),
                                next_i - prev_i, a[prev_i].begin});
    }
    if (next_j > prev_j) {
      Insertion ins;
      ins.modified_offset = b[prev_j].begin;
      ins.text = std::string(modified.substr(b[prev_j].begin, b[next_j - 1].end - b[prev_j].begin));
      ins.word_count = next_j - prev_j;
      ins.original_gap_begin = orig_gap_begin;
      ins.original_gap_end = orig_gap_end;
      ins.replacement = std::string(modified.substr(mod_gap_begin, mod_gap_end - mod_gap_begin));
      diff.insertions.push_back(std::move(ins));
    }
    if (next_i == prev_i) {
      std::string_view before = original.substr(orig_gap_begin, orig_gap_end - orig_gap_begin);
      std::string_view after = modified.substr(mod_gap_begin, mod_gap_end - mod_gap_begin);
      if (before != after) diff.gap_edits.push_back({orig_gap_begin, orig_gap_end, std::string(after)});
    }
  };
  for (const auto& [i, j] : matches) {
    flush_gap(i, j);
    prev_i = i + 1;
    prev_j = j + 1;
  }
  flush_gap(n, m);
  return diff;
}

std::string apply_insertions(std::string_view original, const SpanDiff& diff) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& edit : diff.gap_edits) {
    out.append(original.substr(cursor, edit.original_begin - cursor));
    out += edit.replacement;
    cursor = edit.original_end;
  }
  out.append(original.substr(cursor));
  return out;
}

}  // namespace medfuzz
