#include "medfuzz/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "medfuzz/errors.hpp"

namespace medfuzz {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw ProtocolError(fmt::format("unknown role '{}'", name));
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::kStop:
      return "stop";
    case FinishReason::kLength:
      return "length";
    case FinishReason::kContentFilter:
      return "content_filter";
    case FinishReason::kError:
      return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "stop" || name == "eos" || name == "end_turn") return FinishReason::kStop;
  if (name == "length" || name == "max_tokens") return FinishReason::kLength;
  if (name == "content_filter" || name == "refusal") return FinishReason::kContentFilter;
  return FinishReason::kError;
}

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (top_logprobs < 0 || top_logprobs > 20) throw ConfigError("top_logprobs must be in [0, 20]");
}

// ---- DialogSession -------------------------------------------------------

DialogSession& DialogSession::system(std::string content) { return append({Role::kSystem, std::move(content)}); }
DialogSession& DialogSession::user(std::string content) { return append({Role::kUser, std::move(content)}); }
DialogSession& DialogSession::assistant(std::string content) {
  return append({Role::kAssistant, std::move(content)});
}

DialogSession& DialogSession::append(ChatMessage message) {
  if (message.content.empty()) throw ProtocolError("chat message content must be non-empty");
  if (message.role == Role::kSystem) {
    if (!messages_.empty()) throw ProtocolError("system message only allowed at index 0");
  } else {
    Role expected = Role::kUser;
    if (!messages_.empty() && messages_.back().role == Role::kUser) expected = Role::kAssistant;
    if (message.role != expected) {
      throw ProtocolError(fmt::format("expected a {} turn, got {}", to_string(expected), to_string(message.role)));
    }
  }
  messages_.push_back(std::move(message));
  return *this;
}

std::string DialogSession::transcript() const {
  std::string out;
  for (const auto& m : messages_) {
    if (!out.empty()) out += "\n\n";
    out += m.content;
  }
  return out;
}

// ---- Gateway ------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options, Sleeper sleeper)
    : backend_(std::move(backend)),
      options_(options),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      tokens_(std::max(1, options.burst)),
      last_refill_(std::chrono::steady_clock::now()) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void Gateway::wait_for_token() {
  if (options_.requests_per_second <= 0.0) return;
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      last_refill_ = now;
      tokens_ = std::min<double>(std::max(1, options_.burst), tokens_ + elapsed * options_.requests_per_second);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(
          static_cast<long>(std::ceil((1.0 - tokens_) / options_.requests_per_second * 1000.0)));
    }
    sleeper_(wait);
  }
}

GenerationResult Gateway::generate(const DialogSession& session) {
  if (session.empty() || session.back().role != Role::kUser) {
    throw ProtocolError("generate needs a session ending with a user turn");
  }
  auto backoff = options_.retry.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    acquire_slot();
    GenerationResult result;
    try {
      wait_for_token();
      result = backend_->complete(session);
      release_slot();
    } catch (const TransientError& e) {
      release_slot();
      if (attempt >= options_.retry.max_retries) {
        throw GatewayUnavailableError(
            fmt::format("{}: giving up after {} attempts: {}", backend_->id(), attempt + 1, e.what()));
      }
      spdlog::warn("{}: transient failure (attempt {}): {}", backend_->id(), attempt + 1, e.what());
      sleeper_(backoff);
      backoff = std::min(options_.retry.max_backoff,
                         std::chrono::milliseconds(static_cast<long>(backoff.count() * options_.retry.multiplier)));
      continue;
    } catch (...) {
      release_slot();
      throw;
    }

    if (!session.params().logprobs_requested) {
      result.token_logprobs.reset();
    } else if (result.token_logprobs) {
      for (auto& tok : *result.token_logprobs) {
        auto check = [](double& lp) {
          if (std::isnan(lp) || lp > 1e-6) throw ProtocolError(fmt::format("logprob {} is not <= 0", lp));
          lp = std::min(lp, 0.0);
        };
        check(tok.logprob);
        for (auto& [_, lp] : tok.alternatives) check(lp);
      }
    }
    return result;
  }
}

// ---- letter distribution -------------------------------------------------

std::map<Letter, double> letter_distribution_from(const TokenLogprob& first_token, const std::vector<Letter>& letters,
                                                  const LetterDistributionOptions& options) {
  std::map<Letter, double> mass;
  for (Letter l : letters) mass[l] = 0.0;

  std::set<std::string> seen;
  auto add = [&](const std::string& token, double logprob) {
    if (!seen.insert(token).second) return;
    std::string norm;
    for (unsigned char c : token) {
      if (!std::isspace(c)) norm.push_back(static_cast<char>(std::toupper(c)));
    }
    if (norm.size() != 1) return;
    auto it = mass.find(norm[0]);
    if (it != mass.end()) it->second += std::exp(logprob);
  };
  add(first_token.token, first_token.logprob);
  for (const auto& [token, logprob] : first_token.alternatives) add(token, logprob);

  double total = 0.0;
  for (auto& [_, p] : mass) {
    if (p <= 0.0) p = options.floor;
    total += p;
  }
  if (options.renormalize) {
    for (auto& [_, p] : mass) p /= total;
  }
  return mass;
}

std::map<Letter, double> letter_distribution(Gateway& gateway, DialogSession session, const std::vector<Letter>& letters,
                                             const LetterDistributionOptions& options) {
  if (!gateway.supports_logprobs()) {
    throw CapabilityError(fmt::format("backend '{}' does not expose logprobs", gateway.backend_id()));
  }
  session.params().logprobs_requested = true;
  session.params().max_tokens = 1;
  GenerationResult result = gateway.generate(session);
  if (!result.token_logprobs || result.token_logprobs->empty()) {
    throw ProtocolError(fmt::format("backend '{}' returned no logprobs (finish_reason={})", gateway.backend_id(),
                                    to_string(result.finish_reason)));
  }
  return letter_distribution_from(result.token_logprobs->front(), letters, options);
}

}  // namespace medfuzz
