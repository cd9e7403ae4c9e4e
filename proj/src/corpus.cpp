#include "medfuzz/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/rng.hpp"

namespace medfuzz {
namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string default_item_id(std::size_t record_index) { return fmt::format("{:05d}", record_index); }

// Parses a single-letter option key or answer; returns 0 when it is not one.
Letter as_letter(std::string_view s) {
  if (s.size() != 1) return 0;
  return s[0];
}

void finish_item(BenchmarkItem& item, std::set<std::string>& seen_ids, std::size_t line) {
  if (mentions_figure(item.stem)) item.meta["has_figure_ref"] = true;
  try {
    validate(item);
  } catch (const ItemValidationError& e) {
    throw ItemValidationError(item.item_id, e.rule() + fmt::format(" (record at line {})", line));
  }
  if (!seen_ids.insert(item.item_id).second) {
    throw ItemValidationError(item.item_id, fmt::format("duplicate item id (record at line {})", line));
  }
}

Letter resolve_answer(const std::string& answer, const std::map<Letter, std::string>& options) {
  if (Letter l = as_letter(answer)) return l;
  // MedQA ships the answer text alongside answer_idx; accept the text form
  // when it names exactly one option.
  Letter found = 0;
  for (const auto& [letter, text] : options) {
    if (text == answer) {
      if (found) return '?';
      found = letter;
    }
  }
  return found ? found : '?';
}

BenchmarkItem item_from_record(const nlohmann::json& rec, std::size_t record_index, std::size_t line) {
  if (!rec.is_object()) throw CorpusFormatError(line, "record is not a JSON object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    auto it = rec.find(key);
    if (it == rec.end()) throw CorpusFormatError(line, fmt::format("missing field '{}'", key));
    return *it;
  };

  BenchmarkItem item;
  if (auto it = rec.find("id"); it != rec.end()) {
    if (it->is_string()) {
      item.item_id = it->get<std::string>();
    } else if (it->is_number_integer()) {
      item.item_id = std::to_string(it->get<long long>());
    } else {
      throw CorpusFormatError(line, "field 'id' must be a string or integer");
    }
  } else {
    item.item_id = default_item_id(record_index);
  }

  const auto& question = require("question");
  if (!question.is_string()) throw CorpusFormatError(line, "field 'question' must be a string");
  item.stem = question.get<std::string>();

  const auto& options = require("options");
  if (options.is_object()) {
    for (const auto& [key, value] : options.items()) {
      if (!value.is_string()) throw CorpusFormatError(line, fmt::format("option '{}' must be a string", key));
      Letter l = as_letter(key);
      if (!l) throw ItemValidationError(item.item_id, fmt::format("option key '{}' is not a single letter", key));
      item.options[l] = value.get<std::string>();
    }
  } else if (options.is_array()) {
    if (options.size() > 26) throw ItemValidationError(item.item_id, "more than 26 options");
    Letter l = 'A';
    for (const auto& value : options) {
      if (!value.is_string()) throw CorpusFormatError(line, "options must be strings");
      item.options[l++] = value.get<std::string>();
    }
  } else {
    throw CorpusFormatError(line, "field 'options' must be an object or array");
  }

  std::string answer;
  if (auto it = rec.find("answer_idx"); it != rec.end()) {
    if (!it->is_string()) throw CorpusFormatError(line, "field 'answer_idx' must be a string");
    answer = it->get<std::string>();
  } else {
    const auto& a = require("answer");
    if (!a.is_string()) throw CorpusFormatError(line, "field 'answer' must be a string");
    answer = a.get<std::string>();
  }
  item.correct_letter = resolve_answer(answer, item.options);
  if (item.correct_letter == '?') {
    throw ItemValidationError(item.item_id, fmt::format("answer '{}' does not name an option", answer));
  }

  if (auto it = rec.find("meta"); it != rec.end()) {
    if (!it->is_object()) throw CorpusFormatError(line, "field 'meta' must be an object");
    item.meta = *it;
  }
  for (const auto& [key, value] : rec.items()) {
    if (key == "id" || key == "question" || key == "options" || key == "answer_idx" || key == "meta") continue;
    if (key == "answer" && !rec.contains("answer_idx")) continue;
    item.meta[key] = value;
  }
  return item;
}

// RFC 4180 reader. Returns rows along with the 1-based line each row starts on.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_rows(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.emplace_back(row_line, std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw CorpusFormatError(line, "stray quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw CorpusFormatError(row_line, "unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<Letter> BenchmarkItem::letters() const {
  std::vector<Letter> out;
  out.reserve(options.size());
  for (const auto& [l, _] : options) out.push_back(l);
  return out;
}

void validate(const BenchmarkItem& item) {
  if (item.item_id.empty()) throw ItemValidationError(item.item_id, "empty item id");
  if (item.options.size() < 2) throw ItemValidationError(item.item_id, "fewer than 2 options");
  Letter expected = 'A';
  for (const auto& [letter, text] : item.options) {
    if (letter != expected || expected > 'Z') {
      throw ItemValidationError(item.item_id, "option letters must be consecutive from 'A'");
    }
    if (is_blank(text)) throw ItemValidationError(item.item_id, fmt::format("option {} is empty", letter));
    ++expected;
  }
  if (!item.options.contains(item.correct_letter)) {
    throw ItemValidationError(item.item_id,
                              fmt::format("correct letter '{}' is not an option letter", item.correct_letter));
  }
  if (is_blank(item.stem)) throw ItemValidationError(item.item_id, "empty stem");
}

std::string letter_list(const std::vector<Letter>& letters) {
  std::string out;
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (i > 0) out += letters.size() == 2 ? " " : ", ";
    if (i + 1 == letters.size() && letters.size() > 1) out += "or ";
    out.push_back(letters[i]);
  }
  return out;
}

std::string render_item(const BenchmarkItem& item) {
  std::string out = item.stem;
  out += "\n";
  for (const auto& [letter, text] : item.options) {
    out += "\n";
    out.push_back(letter);
    out += ": ";
    out += text;
  }
  return out;
}

std::string render_answer(const BenchmarkItem& item) {
  return std::string(1, item.correct_letter) + ": " + item.correct_text();
}

bool mentions_figure(std::string_view stem) {
  static const std::regex kFigure(
      R"(\b(pictured|photographs?|photomicrographs?|illustrations?|images?|figures?|exhibits?)\b)",
      std::regex::icase | std::regex::optimize);
  return std::regex_search(stem.begin(), stem.end(), kFigure);
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "csv") return CorpusFormat::kCsv;
  throw ConfigError(fmt::format("unknown corpus format '{}'", name));
}

CorpusFormat guess_corpus_format(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? CorpusFormat::kCsv : CorpusFormat::kJsonl;
}

std::vector<BenchmarkItem> parse_jsonl(std::string_view text) {
  std::vector<BenchmarkItem> items;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (is_blank(line)) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusFormatError(line_no, e.what());
    }
    BenchmarkItem item;
    try {
      item = item_from_record(rec, items.size(), line_no);
    } catch (const ItemValidationError& e) {
      throw ItemValidationError(e.item_id(), e.rule() + fmt::format(" (record at line {})", line_no));
    }
    finish_item(item, seen, line_no);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BenchmarkItem> parse_csv(std::string_view text) {
  auto rows = read_csv_rows(text);
  std::vector<BenchmarkItem> items;
  if (rows.empty()) return items;

  const auto& header = rows.front().second;
  int question_col = -1, answer_col = -1, id_col = -1;
  std::map<Letter, int> option_cols;
  std::vector<std::pair<std::string, int>> meta_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    std::string name = trim(header[c]);
    if (name == "question") {
      question_col = c;
    } else if (name == "answer") {
      answer_col = c;
    } else if (name == "id") {
      id_col = c;
    } else if (name.size() == 1 && name[0] >= 'A' && name[0] <= 'Z') {
      option_cols[name[0]] = c;
    } else {
      meta_cols.emplace_back(name, c);
    }
  }
  if (question_col < 0 || answer_col < 0 || option_cols.size() < 2) {
    throw CorpusFormatError(rows.front().first, "CSV header needs 'question', 'answer' and option columns A, B, ...");
  }

  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line, cells] = rows[r];
    if (cells.size() != header.size()) {
      throw CorpusFormatError(line, fmt::format("expected {} fields, found {}", header.size(), cells.size()));
    }
    BenchmarkItem item;
    item.item_id = id_col >= 0 && !trim(cells[id_col]).empty() ? trim(cells[id_col]) : default_item_id(items.size());
    item.stem = cells[question_col];
    for (const auto& [letter, col] : option_cols) {
      // Trailing empty option cells mean the item has fewer options; gaps are
      // caught by validation.
      if (!trim(cells[col]).empty()) item.options[letter] = cells[col];
    }
    std::string answer = trim(cells[answer_col]);
    item.correct_letter = resolve_answer(answer, item.options);
    if (item.correct_letter == '?') {
      throw ItemValidationError(item.item_id,
                                fmt::format("answer '{}' does not name an option (record at line {})", answer, line));
    }
    for (const auto& [name, col] : meta_cols) item.meta[name] = cells[col];
    finish_item(item, seen, line);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BenchmarkItem> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusFormatError(0, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return format == CorpusFormat::kJsonl ? parse_jsonl(text) : parse_csv(text);
}

nlohmann::json to_jsonl_record(const BenchmarkItem& item) {
  nlohmann::json options = nlohmann::json::object();
  for (const auto& [letter, text] : item.options) options[std::string(1, letter)] = text;
  nlohmann::json rec = {{"id", item.item_id},
                        {"question", item.stem},
                        {"options", options},
                        {"answer", std::string(1, item.correct_letter)}};
  if (!item.meta.empty()) rec["meta"] = item.meta;
  return rec;
}

// ---- permutations -------------------------------------------------------

OptionPermutation OptionPermutation::identity(const std::vector<Letter>& letters) {
  OptionPermutation p;
  for (Letter l : letters) p.mapping[l] = l;
  return p;
}

bool OptionPermutation::is_identity() const {
  return std::all_of(mapping.begin(), mapping.end(), [](const auto& kv) { return kv.first == kv.second; });
}

Letter OptionPermutation::display_of(Letter original) const {
  auto it = mapping.find(original);
  if (it == mapping.end()) throw MappingError(fmt::format("letter '{}' is outside the permutation domain", original));
  return it->second;
}

OptionPermutation OptionPermutation::inverse() const {
  OptionPermutation inv;
  inv.seed = seed;
  for (const auto& [from, to] : mapping) inv.mapping[to] = from;
  return inv;
}

std::pair<BenchmarkItem, OptionPermutation> permute_options(const BenchmarkItem& item, std::uint64_t seed) {
  std::vector<Letter> letters = item.letters();
  std::vector<Letter> shuffled = letters;
  std::mt19937_64 engine(derive_seed(seed, {item.item_id, "option-permutation"}));
  stable_shuffle(shuffled, engine);

  OptionPermutation perm;
  perm.seed = seed;
  for (std::size_t i = 0; i < letters.size(); ++i) perm.mapping[letters[i]] = shuffled[i];
  return {apply_permutation(item, perm), perm};
}

BenchmarkItem apply_permutation(const BenchmarkItem& item, const OptionPermutation& perm) {
  if (perm.mapping.size() != item.options.size()) throw MappingError("permutation size does not match option count");
  BenchmarkItem out = item;
  out.options.clear();
  for (const auto& [letter, text] : item.options) {
    Letter display = perm.display_of(letter);
    if (!item.options.contains(display) || !out.options.emplace(display, text).second) {
      throw MappingError("permutation is not a bijection over the item's letters");
    }
  }
  out.correct_letter = perm.display_of(item.correct_letter);
  return out;
}

Letter canonical_answer(Letter display_letter, const OptionPermutation& perm) {
  for (const auto& [original, display] : perm.mapping) {
    if (display == display_letter) return original;
  }
  throw MappingError(fmt::format("letter '{}' is outside the permutation codomain", display_letter));
}

}  // namespace medfuzz
