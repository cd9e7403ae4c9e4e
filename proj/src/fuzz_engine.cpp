#include "medfuzz/fuzz_engine.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/rng.hpp"

namespace medfuzz {
namespace {

std::string strip_bold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
      ++i;
      continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string normalize_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

std::string trim_copy(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t") == std::string::npos; }

// The attacker failed to produce something usable for this turn.
struct AttackerFailure {
  std::string detail;
};

}  // namespace

void FuzzConfig::validate() const {
  if (k_max < 1) throw ConfigError(fmt::format("k_max must be >= 1, got {}", k_max));
  attacker_params.validate();
  target_params.validate();
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::kOrigIncorrect:
      return "orig_incorrect";
    case Outcome::kAttackFailed:
      return "attack_failed";
    case Outcome::kAttackSucceeded:
      return "attack_succeeded";
    case Outcome::kLlmError:
      return "llm_error";
  }
  return "llm_error";
}

Outcome parse_outcome(std::string_view name) {
  if (name == "orig_incorrect") return Outcome::kOrigIncorrect;
  if (name == "attack_failed") return Outcome::kAttackFailed;
  if (name == "attack_succeeded") return Outcome::kAttackSucceeded;
  if (name == "llm_error") return Outcome::kLlmError;
  throw ProtocolError(fmt::format("unknown outcome '{}'", name));
}

std::string_view to_string(TrajectoryStatus status) {
  return status == TrajectoryStatus::kComplete ? "complete" : "in_progress";
}

TrajectoryStatus parse_trajectory_status(std::string_view name) {
  if (name == "complete") return TrajectoryStatus::kComplete;
  if (name == "in_progress") return TrajectoryStatus::kInProgress;
  throw ProtocolError(fmt::format("unknown trajectory status '{}'", name));
}

// ---- extraction ---------------------------------------------------------

BenchmarkItem extract_modified_item(std::string_view attacker_reply, const BenchmarkItem& original,
                                    bool compare_options) {
  static const std::regex kOption(R"(^\s*(?:\(([A-Za-z])\)|([A-Za-z])\s*[:.)])\s*(.*)$)");
  static const std::regex kAnswerLine(R"(^\s*(?:the\s+)?(?:correct\s+)?answer\s*(?:is)?\s*[:\-]?\s*\(?([A-Z])\b.*$)",
                                      std::regex::icase);
  static const std::regex kAnnotation(R"(\s*[\(\[]\s*(?:correct(?:\s+answer)?|answer)\s*[\)\]]\s*$)",
                                      std::regex::icase);

  std::string cleaned = strip_bold(attacker_reply);
  if (trim_copy(cleaned).empty()) throw ExtractionError("empty-reply", "attacker reply is empty");
  std::vector<std::string> lines = split_lines(cleaned);

  const std::vector<Letter> want = original.letters();
  std::size_t end = lines.size();
  while (end > 0) {
    const std::string& line = lines[end - 1];
    std::smatch m;
    if (blank(line)) {
      --end;
    } else if (std::regex_match(line, m, kAnswerLine) && !std::regex_match(line, kOption)) {
      Letter stated = static_cast<Letter>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
      if (stated != original.correct_letter) {
        throw ExtractionError("answer-changed",
                              fmt::format("reply states answer {} but the correct answer is {}", stated,
                                          original.correct_letter));
      }
      --end;
    } else {
      break;
    }
  }

  // Walk up through the option block; blank lines inside it are allowed.
  std::vector<std::pair<Letter, std::string>> block;
  std::size_t begin = end;
  while (begin > 0 && block.size() < want.size()) {
    const std::string& line = lines[begin - 1];
    std::smatch m;
    if (blank(line)) {
      --begin;
      continue;
    }
    if (!std::regex_match(line, m, kOption)) break;
    std::string letter = m[1].matched ? m[1].str() : m[2].str();
    block.emplace_back(letter[0], m[3].str());
    --begin;
  }
  std::reverse(block.begin(), block.end());

  std::vector<Letter> got;
  for (const auto& [letter, text] : block) got.push_back(letter);
  if (got != want) {
    throw ExtractionError("missing-options", fmt::format("expected options {} at the end of the reply",
                                                         letter_list(want)));
  }

  for (auto& [letter, text] : block) {
    std::smatch m;
    if (std::regex_search(text, m, kAnnotation)) {
      if (letter != original.correct_letter) {
        throw ExtractionError("answer-changed", fmt::format("reply marks option {} as the answer", letter));
      }
      text = m.prefix().str();
    }
    if (compare_options && normalize_ws(text) != normalize_ws(original.options.at(letter))) {
      throw ExtractionError("answer-region-modified", fmt::format("option {} text was changed", letter));
    }
  }

  std::size_t stem_end = begin;
  while (stem_end > 0 && blank(lines[stem_end - 1])) --stem_end;
  std::string stem;
  for (std::size_t i = 0; i < stem_end; ++i) {
    if (i) stem += '\n';
    stem += lines[i];
  }
  static const std::regex kLabel(R"(^\s*(?:(?:modified|new|newly\s+modified)\s+)?question\s*:\s*)", std::regex::icase);
  stem = trim_copy(std::regex_replace(stem, kLabel, "", std::regex_constants::format_first_only));
  if (stem.empty()) throw ExtractionError("empty-stem", "reply has no question text before the options");

  BenchmarkItem out = original;
  out.stem = std::move(stem);
  return out;
}

// ---- seeds --------------------------------------------------------------

std::uint64_t target_seed(std::uint64_t master, const std::string& item_id, int replicate, int probe_index) {
  return derive_seed(master, {item_id, "target"},
                     {static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(probe_index)});
}

std::uint64_t attacker_seed(std::uint64_t master, const std::string& item_id, int replicate, int turn, int call) {
  return derive_seed(master, {item_id, "attacker"},
                     {static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(turn),
                      static_cast<std::uint64_t>(call)});
}

// ---- engine -------------------------------------------------------------

namespace {

ProbeConfig with_params(ProbeConfig pc, const GenerationParams& params) {
  pc.params = params;
  return pc;
}

}  // namespace

FuzzEngine::FuzzEngine(Gateway& attacker, Gateway& target, const TemplateStore& templates, FuzzConfig config,
                       ProbeConfig probe_config)
    : attacker_(attacker),
      templates_(templates),
      config_(std::move(config)),
      probe_(target, templates, with_params(std::move(probe_config), config_.target_params)) {
  config_.validate();
}

AttackTrajectory FuzzEngine::run_attack(const BenchmarkItem& item, int replicate_index,
                                        std::optional<AttackTrajectory> resume_from, const Checkpoint& checkpoint) {
  validate(item);
  AttackTrajectory traj;
  if (resume_from) {
    if (resume_from->item_id != item.item_id || resume_from->replicate_index != replicate_index) {
      throw ConfigError(fmt::format("checkpoint for {}.{} cannot resume {}.{}", resume_from->item_id,
                                    resume_from->replicate_index, item.item_id, replicate_index));
    }
    if (resume_from->complete()) return *resume_from;
    traj = std::move(*resume_from);
  } else {
    traj.item_id = item.item_id;
    traj.replicate_index = replicate_index;
    traj.original_item = item;
  }
  auto save = [&] {
    if (checkpoint) checkpoint(traj);
  };
  auto finish = [&](Outcome outcome, std::string detail = {}) {
    traj.outcome = outcome;
    traj.status = TrajectoryStatus::kComplete;
    traj.error_detail = std::move(detail);
    save();
    return traj;
  };
  const std::uint64_t master = config_.rng_seed;
  const Letter correct = item.correct_letter;

  if (!traj.baseline_response) {
    traj.baseline_response = probe_.probe(item, target_seed(master, item.item_id, replicate_index, 0));
    save();
  }
  const TargetResponse& baseline = *traj.baseline_response;
  const bool answer_parsed = !baseline.error || baseline.error == ProbeError::kUnparseableConfidence;
  if (answer_parsed && baseline.answer_letter != correct) return finish(Outcome::kOrigIncorrect);
  if (baseline.error) {
    return finish(Outcome::kLlmError, fmt::format("baseline probe: {}", to_string(*baseline.error)));
  }

  const std::string correct_answer = render_answer(item);
  const std::string baseline_conf = format_confidences(baseline.confidences);

  for (int turn = static_cast<int>(traj.turns.size()); turn < config_.k_max; ++turn) {
    DialogSession session(attacker_.backend_id(), config_.attacker_params);
    for (const auto& msg : traj.attacker_messages) session.append(msg);
    int call = 0;

    auto ask = [&]() -> std::string {
      session.params().seed_hint =
          static_cast<std::int64_t>(attacker_seed(master, item.item_id, replicate_index, turn, call++) >> 1);
      GenerationResult r;
      try {
        r = attacker_.generate(session);
      } catch (const ProtocolError& e) {
        throw AttackerFailure{fmt::format("attacker protocol failure: {}", e.what())};
      }
      if (r.finish_reason == FinishReason::kContentFilter) throw AttackerFailure{"attacker content_filter"};
      if (trim_copy(r.text).empty()) throw AttackerFailure{"attacker returned an empty reply"};
      session.assistant(r.text);
      return r.text;
    };

    AttackTurn record;
    record.turn_index = turn;
    try {
      if (turn == 0) {
        if (session.empty()) session.system(templates_.render(TemplateId::kAttackerSystem, {}));
        session.user(templates_.render(TemplateId::kAttackerColdStart,
                                       {{"benchmark_item", render_item(item)},
                                        {"correct_answer", correct_answer},
                                        {"target_cot", baseline.cot},
                                        {"target_confidences", baseline_conf}}));
      } else {
        const TargetResponse& prev = traj.turns.back().target_response;
        session.user(templates_.render(TemplateId::kAttackerPostmortem,
                                       {{"confidences_before", baseline_conf},
                                        {"target_cot", prev.cot},
                                        {"confidences_after", format_confidences(prev.confidences)}}));
        record.postmortem = ask();
        session.user(templates_.render(TemplateId::kAttackerReplan, {{"correct_answer", correct_answer}}));
      }
      record.attack_plan = ask();

      const std::string modify_request = templates_.render(TemplateId::kAttackerModifyRequest, {});
      session.user(modify_request);
      std::string reply = ask();
      try {
        record.modified_item = extract_modified_item(reply, item, config_.preserve_answer_check);
      } catch (const ExtractionError& first) {
        spdlog::debug("{}.{} turn {}: extraction failed ({}), retrying", item.item_id, replicate_index, turn,
                      first.what());
        record.extraction_retries = 1;
        session.user(modify_request);
        reply = ask();
        try {
          record.modified_item = extract_modified_item(reply, item, config_.preserve_answer_check);
        } catch (const ExtractionError& second) {
          throw AttackerFailure{fmt::format("extraction failed after retry ({}): {}", second.reason(), second.what())};
        }
      }
    } catch (const AttackerFailure& failure) {
      traj.attacker_messages = session.messages();
      return finish(Outcome::kLlmError, fmt::format("turn {}: {}", turn, failure.detail));
    }

    if (record.modified_item.correct_letter != correct || record.modified_item.options != item.options) {
      throw std::logic_error("extracted item does not preserve the answer");
    }
    SpanDiff diff = diff_words(item.stem, record.modified_item.stem);
    record.added_spans = diff.inserted_texts();
    for (const auto& del : diff.deletions) record.warnings.push_back(fmt::format("deleted text: \"{}\"", del.text));

    record.target_response =
        probe_.probe(record.modified_item, target_seed(master, item.item_id, replicate_index, turn + 1));
    const TargetResponse resp = record.target_response;
    traj.turns.push_back(std::move(record));
    traj.attacker_messages = session.messages();

    if (resp.error) return finish(Outcome::kLlmError, fmt::format("turn {} probe: {}", turn, to_string(*resp.error)));
    if (resp.answer_letter != correct) {
      traj.success_turn = turn;
      return finish(Outcome::kAttackSucceeded);
    }
    save();
  }
  return finish(Outcome::kAttackFailed);
}

}  // namespace medfuzz
