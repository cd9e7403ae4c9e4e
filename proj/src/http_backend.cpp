#include "medfuzz/http_backend.hpp"

#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>

#include "medfuzz/errors.hpp"

namespace medfuzz {
namespace {

std::string excerpt(const std::string& s) { return s.size() <= 300 ? s : s.substr(0, 300) + "..."; }

bool looks_like_content_filter(const std::string& body) {
  return body.find("content_filter") != std::string::npos || body.find("content_policy") != std::string::npos;
}

}  // namespace

nlohmann::json build_chat_request(const DialogSession& session, const std::string& model) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : session.messages()) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  const auto& p = session.params();
  nlohmann::json req = {{"model", model},
                        {"messages", std::move(messages)},
                        {"temperature", p.temperature},
                        {"max_tokens", p.max_tokens}};
  if (p.logprobs_requested) {
    req["logprobs"] = true;
    req["top_logprobs"] = p.top_logprobs;
  }
  if (p.seed_hint) req["seed"] = *p.seed_hint;
  return req;
}

GenerationResult parse_chat_response(const nlohmann::json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    GenerationResult result;
    const auto& message = choice.at("message");
    if (auto it = message.find("content"); it != message.end() && it->is_string()) result.text = it->get<std::string>();
    if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string()) {
      result.finish_reason = parse_finish_reason(it->get<std::string>());
    }
    if (auto it = message.find("refusal"); it != message.end() && it->is_string() && result.text.empty()) {
      result.finish_reason = FinishReason::kContentFilter;
    }
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto content = lp->find("content"); content != lp->end() && content->is_array()) {
        std::vector<TokenLogprob> tokens;
        for (const auto& t : *content) {
          TokenLogprob tok;
          tok.token = t.at("token").get<std::string>();
          tok.logprob = t.at("logprob").get<double>();
          if (auto top = t.find("top_logprobs"); top != t.end() && top->is_array()) {
            for (const auto& alt : *top) {
              tok.alternatives.emplace_back(alt.at("token").get<std::string>(), alt.at("logprob").get<double>());
            }
          }
          tokens.push_back(std::move(tok));
        }
        result.token_logprobs = std::move(tokens);
      }
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("malformed chat-completion payload: {}", e.what()));
  }
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw ConfigError("http backend needs a model name");
  const std::string& url = config_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::id() const { return fmt::format("http:{}@{}", config_.model, config_.base_url); }

GenerationResult HttpBackend::complete(const DialogSession& session) {
  httplib::Client client(scheme_host_port_);
  auto timeout_us = static_cast<long>(config_.timeout_s * 1e6);
  client.set_connection_timeout(0, std::min(timeout_us, 30'000'000L));
  client.set_read_timeout(timeout_us / 1'000'000, timeout_us % 1'000'000);
  client.set_write_timeout(timeout_us / 1'000'000, timeout_us % 1'000'000);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  for (const auto& [k, v] : config_.extra_headers) headers.emplace(k, v);

  const std::string body = build_chat_request(session, config_.model).dump();
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  if (!res) throw TransientError(fmt::format("transport error: {}", httplib::to_string(res.error())));

  if (res->status == 429 || res->status == 408 || res->status >= 500) {
    throw TransientError(fmt::format("HTTP {}: {}", res->status, excerpt(res->body)));
  }
  if (res->status != 200) {
    if (looks_like_content_filter(res->body)) {
      GenerationResult filtered;
      filtered.finish_reason = FinishReason::kContentFilter;
      return filtered;
    }
    throw ProtocolError(fmt::format("HTTP {}: {}", res->status, excerpt(res->body)));
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(fmt::format("response is not JSON: {}", e.what()));
  }
  return parse_chat_response(parsed);
}

}  // namespace medfuzz
