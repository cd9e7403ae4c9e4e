#include "medfuzz/scripted_backend.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "medfuzz/errors.hpp"

namespace medfuzz {
namespace {

std::string expand(const std::string& text, const std::vector<std::string>& groups) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '$' && i + 1 < text.size()) {
      char next = text[i + 1];
      if (next == '$') {
        out.push_back('$');
        ++i;
        continue;
      }
      if (next >= '1' && next <= '9') {
        std::size_t g = static_cast<std::size_t>(next - '1');
        if (g < groups.size()) out += groups[g];
        ++i;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

std::string excerpt(const std::string& s) {
  constexpr std::size_t kMax = 160;
  if (s.size() <= kMax) return s;
  return s.substr(0, kMax) + "...";
}

}  // namespace

ScriptRule rule_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("script rule must be an object");
  ScriptRule r;
  r.role = j.value("role", "");
  r.pattern = j.value("pattern", "");
  r.contains = j.value("contains", "");
  r.context = j.value("context", "");
  r.context_contains = j.value("context_contains", "");
  r.system_contains = j.value("system_contains", "");
  if (j.contains("seeds")) r.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
  r.reply = j.value("reply", "");
  if (j.contains("token_logprobs")) r.token_logprobs = j.at("token_logprobs").get<std::map<std::string, double>>();
  r.finish_reason = parse_finish_reason(j.value("finish_reason", "stop"));
  r.is_default = j.value("default", false);
  return r;
}

nlohmann::json to_json(const ScriptRule& r) {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  put("role", r.role);
  put("pattern", r.pattern);
  put("contains", r.contains);
  put("context", r.context);
  put("context_contains", r.context_contains);
  put("system_contains", r.system_contains);
  if (r.seeds) j["seeds"] = *r.seeds;
  j["reply"] = r.reply;
  if (!r.token_logprobs.empty()) j["token_logprobs"] = r.token_logprobs;
  if (r.finish_reason != FinishReason::kStop) j["finish_reason"] = std::string(to_string(r.finish_reason));
  if (r.is_default) j["default"] = true;
  return j;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules, bool supports_logprobs, std::string name)
    : supports_logprobs_(supports_logprobs), name_(std::move(name)) {
  for (auto& rule : rules) {
    if (rule.is_default) {
      if (default_rule_) throw ConfigError("script has more than one default rule");
      default_rule_ = std::move(rule);
      continue;
    }
    Compiled c;
    try {
      if (!rule.role.empty()) c.role.emplace(rule.role);
      if (!rule.pattern.empty()) c.pattern.emplace(rule.pattern);
      if (!rule.context.empty()) c.context.emplace(rule.context);
    } catch (const std::regex_error& e) {
      throw ConfigError(fmt::format("bad regex in script rule: {}", e.what()));
    }
    c.rule = std::move(rule);
    rules_.push_back(std::move(c));
  }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& script) {
  if (!script.is_object() || !script.contains("rules") || !script.at("rules").is_array()) {
    throw ConfigError("script must be an object with a 'rules' array");
  }
  std::vector<ScriptRule> rules;
  for (const auto& r : script.at("rules")) rules.push_back(rule_from_json(r));
  return std::make_shared<ScriptedBackend>(std::move(rules), script.value("supports_logprobs", true),
                                           script.value("name", "scripted"));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open script " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("script {}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

GenerationResult ScriptedBackend::complete(const DialogSession& session) {
  {
    std::lock_guard lock(mu_);
    if (recording_) requests_.push_back(session);
  }
  const ChatMessage& last = session.back();
  const std::string role(to_string(last.role));
  const std::string transcript = session.transcript();
  const std::string system =
      !session.empty() && session.messages().front().role == Role::kSystem ? session.messages().front().content : "";

  const ScriptRule* hit = nullptr;
  std::vector<std::string> groups;
  for (const auto& c : rules_) {
    const ScriptRule& r = c.rule;
    if (c.role && !std::regex_match(role, *c.role)) continue;
    if (!r.contains.empty() && last.content.find(r.contains) == std::string::npos) continue;
    if (!r.context_contains.empty() && transcript.find(r.context_contains) == std::string::npos) continue;
    if (!r.system_contains.empty() && system.find(r.system_contains) == std::string::npos) continue;
    if (r.seeds) {
      if (!session.params().seed_hint) continue;
      if (std::find(r.seeds->begin(), r.seeds->end(), *session.params().seed_hint) == r.seeds->end()) continue;
    }
    std::vector<std::string> found;
    if (c.pattern) {
      std::smatch m;
      if (!std::regex_search(last.content, m, *c.pattern)) continue;
      for (std::size_t g = 1; g < m.size(); ++g) found.push_back(m[g].str());
    }
    if (c.context) {
      std::smatch m;
      if (!std::regex_search(transcript, m, *c.context)) continue;
      for (std::size_t g = 1; g < m.size(); ++g) found.push_back(m[g].str());
    }
    hit = &r;
    groups = std::move(found);
    break;
  }
  if (!hit) {
    if (!default_rule_) throw ScriptGapError(fmt::format("no script rule matches prompt: \"{}\"", excerpt(last.content)));
    hit = &*default_rule_;
  }

  GenerationResult result;
  result.text = expand(hit->reply, groups);
  result.finish_reason = hit->finish_reason;
  if (supports_logprobs_ && session.params().logprobs_requested) {
    TokenLogprob first;
    if (hit->token_logprobs.empty()) {
      first.token = result.text.empty() ? std::string() : result.text.substr(0, 1);
      first.logprob = 0.0;
      first.alternatives.emplace_back(first.token, 0.0);
    } else {
      for (const auto& [token, lp] : hit->token_logprobs) first.alternatives.emplace_back(expand(token, groups), lp);
      std::stable_sort(first.alternatives.begin(), first.alternatives.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      first.token = first.alternatives.front().first;
      first.logprob = first.alternatives.front().second;
    }
    result.token_logprobs = std::vector<TokenLogprob>{std::move(first)};
  }
  return result;
}

void ScriptedBackend::set_recording(bool on) {
  std::lock_guard lock(mu_);
  recording_ = on;
}

std::vector<DialogSession> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t ScriptedBackend::request_count() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

void ScriptedBackend::clear_requests() {
  std::lock_guard lock(mu_);
  requests_.clear();
}

}  // namespace medfuzz
