#pragma once

// Chat-completions client for any server speaking the de-facto
// `POST <base_url>/chat/completions` schema (messages array plus
// logprobs/top_logprobs knobs).

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "medfuzz/llm.hpp"

namespace medfuzz {

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  // Name of the environment variable holding the bearer token; the key
  // itself never goes into config files or manifests.
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 120.0;
  bool supports_logprobs = true;
  std::map<std::string, std::string> extra_headers;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  GenerationResult complete(const DialogSession& session) override;
  bool supports_logprobs() const override { return config_.supports_logprobs; }
  std::string id() const override;

  const HttpBackendConfig& config() const { return config_; }

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Wire format helpers, exposed for tests.
nlohmann::json build_chat_request(const DialogSession& session, const std::string& model);
GenerationResult parse_chat_response(const nlohmann::json& body);

}  // namespace medfuzz
