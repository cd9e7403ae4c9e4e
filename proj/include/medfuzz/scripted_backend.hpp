#pragma once

// Deterministic backend for offline runs and tests. A script is an ordered
// list of rules; the first rule whose conditions all hold against the
// session produces the reply. Replies depend only on the session and its
// seed hint, so identical prefixes always get identical replies.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medfuzz/llm.hpp"

namespace medfuzz {

struct ScriptRule {
  // Conditions on the last message. Empty means "don't care".
  std::string role;       // regex over "system" | "user" | "assistant"
  std::string pattern;    // regex searched in the last message
  std::string contains;   // substring of the last message
  // Conditions on the whole session transcript.
  std::string context;           // regex
  std::string context_contains;  // substring
  std::string system_contains;   // substring of the leading system message
  std::optional<std::vector<std::int64_t>> seeds;  // seed_hint must be one of these

  // Reply text; $1..$9 expand to capture groups of `pattern` then `context`.
  std::string reply;
  // First-token alternatives served when logprobs are requested. Keys may
  // use $n expansion too.
  std::map<std::string, double> token_logprobs;
  FinishReason finish_reason = FinishReason::kStop;
  bool is_default = false;
};

ScriptRule rule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScriptRule& rule);

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules, bool supports_logprobs = true,
                           std::string name = "scripted");

  // {"supports_logprobs": bool?, "name": str?, "rules": [ ... ]}
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& script);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  GenerationResult complete(const DialogSession& session) override;
  bool supports_logprobs() const override { return supports_logprobs_; }
  std::string id() const override { return name_; }

  // Request recording is on by default; long CLI runs switch it off.
  void set_recording(bool on);
  std::vector<DialogSession> requests() const;
  std::size_t request_count() const;
  void clear_requests();

 private:
  struct Compiled {
    ScriptRule rule;
    std::optional<std::regex> role;
    std::optional<std::regex> pattern;
    std::optional<std::regex> context;
  };

  std::vector<Compiled> rules_;
  std::optional<ScriptRule> default_rule_;
  bool supports_logprobs_;
  std::string name_;

  mutable std::mutex mu_;
  bool recording_ = true;
  std::vector<DialogSession> requests_;
};

}  // namespace medfuzz
