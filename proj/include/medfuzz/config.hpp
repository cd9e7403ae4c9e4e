#pragma once

// The run configuration: one JSON document. Secrets stay in the
// environment; only the name of the variable holding a key is configured.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "medfuzz/corpus.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/http_backend.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"

namespace medfuzz {

struct BackendSpec {
  enum class Kind { kScripted, kHttp };
  Kind kind = Kind::kScripted;
  std::filesystem::path script;  // scripted
  HttpBackendConfig http;        // http
};

struct RunConfig {
  BackendSpec attacker;
  BackendSpec target;
  std::optional<BackendSpec> judge;
  GenerationParams attacker_params;
  GenerationParams target_params;
  GenerationParams judge_params{0.0, 16, false, 20, std::nullopt};
  int k_max = 5;
  int replicates = 5;
  bool preserve_answer_check = true;
  std::uint64_t master_seed = 0;
  bool permute_options = false;
  std::size_t exemplar_count = 0;
  std::filesystem::path exemplar_pool;  // corpus file; empty for none
  int n_generations = 20;
  LetterDistributionOptions letter_options;
  int controls_m = 30;
  int control_max_retries = 5;
  bool retain_orig_incorrect = true;
  int workers = 1;
  GatewayOptions gateway;
  std::optional<std::filesystem::path> template_dir;

  // Throws ConfigError.
  void validate() const;
  FuzzConfig fuzz_config() const;
};

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
// Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical form (absolute paths, every default spelled out); the config
// hash is sha256 of its compact dump without "workers" and "gateway".
nlohmann::json to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

std::shared_ptr<Backend> make_backend(const BackendSpec& spec);
std::vector<IclExemplar> load_exemplar_pool(const RunConfig& config);
TemplateStore load_templates(const RunConfig& config);

}  // namespace medfuzz
