#pragma once

// Chat sessions and the gateway every model call goes through.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medfuzz/corpus.hpp"

namespace medfuzz {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationParams {
  double temperature = 1.0;
  int max_tokens = 1024;
  bool logprobs_requested = false;
  int top_logprobs = 20;
  std::optional<std::int64_t> seed_hint;

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

// Ordered messages with an optional leading system turn, then strictly
// alternating user/assistant turns. The append methods enforce that.
class DialogSession {
 public:
  DialogSession() = default;
  DialogSession(std::string backend_ref, GenerationParams params)
      : backend_ref_(std::move(backend_ref)), params_(std::move(params)) {}

  DialogSession& system(std::string content);
  DialogSession& user(std::string content);
  DialogSession& assistant(std::string content);
  DialogSession& append(ChatMessage message);

  const std::vector<ChatMessage>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }
  const ChatMessage& back() const { return messages_.back(); }

  const std::string& backend_ref() const { return backend_ref_; }
  const GenerationParams& params() const { return params_; }
  GenerationParams& params() { return params_; }

  // Concatenated contents, one message per paragraph; used for matching.
  std::string transcript() const;

 private:
  std::vector<ChatMessage> messages_;
  std::string backend_ref_;
  GenerationParams params_;
};

enum class FinishReason { kStop, kLength, kContentFilter, kError };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view name);

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> alternatives;
};

struct GenerationResult {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  FinishReason finish_reason = FinishReason::kStop;
};

// A model endpoint. Implementations throw TransientError for failures worth
// retrying and ProtocolError for malformed payloads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult complete(const DialogSession& session) = 0;
  virtual bool supports_logprobs() const = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_in_flight = 4;
  // Token bucket; <= 0 disables rate limiting.
  double requests_per_second = 0.0;
  int burst = 1;
};

// Shared front door to one backend: retries with exponential backoff, caps
// concurrent calls, and rate-limits. Thread-safe.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {}, Sleeper sleeper = {});

  // Requires a non-empty session ending in a user turn. content_filter comes
  // back as data. Throws GatewayUnavailableError once retries are exhausted.
  GenerationResult generate(const DialogSession& session);

  bool supports_logprobs() const { return backend_->supports_logprobs(); }
  std::string backend_id() const { return backend_->id(); }
  Backend& backend() { return *backend_; }

 private:
  void acquire_slot();
  void release_slot();
  void wait_for_token();

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  Sleeper sleeper_;

  std::mutex mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
  double tokens_ = 0.0;
  std::chrono::steady_clock::time_point last_refill_;
};

struct LetterDistributionOptions {
  double floor = 1e-6;
  bool renormalize = true;
};

// Probability of each requested letter being the next token, read from the
// first generated token's top alternatives. Tokens are matched after
// trimming whitespace and upper-casing. Missing letters get `floor`; with
// renormalize the result sums to 1 over exactly `letters`.
// Throws CapabilityError when the backend has no logprobs.
std::map<Letter, double> letter_distribution(Gateway& gateway, DialogSession session,
                                             const std::vector<Letter>& letters,
                                             const LetterDistributionOptions& options = {});

// The pure part of letter_distribution, exposed for testing.
std::map<Letter, double> letter_distribution_from(const TokenLogprob& first_token,
                                                  const std::vector<Letter>& letters,
                                                  const LetterDistributionOptions& options = {});

}  // namespace medfuzz
