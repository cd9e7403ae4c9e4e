#include "medfuzz/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include <fmt/format.h>

#include "medfuzz/digest.hpp"
#include "medfuzz/errors.hpp"
#include "medfuzz/scripted_backend.hpp"
#include "medfuzz/serialize.hpp"

namespace medfuzz {
namespace {

using nlohmann::json;

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, std::string_view where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{} has the wrong type", where, key));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

BackendSpec parse_backend(const json& j, const std::filesystem::path& base, std::string_view where) {
  only_keys(j, where,
            {"kind", "script", "script_sha256", "base_url", "model", "api_key_env", "timeout_s", "supports_logprobs",
             "headers"});
  BackendSpec spec;
  auto kind = get_or<std::string>(j, "kind", "scripted", where);
  if (kind == "scripted") {
    spec.kind = BackendSpec::Kind::kScripted;
    if (!j.contains("script")) throw ConfigError(fmt::format("{} needs a 'script' path", where));
    spec.script = resolve(base, j.at("script").get<std::string>());
  } else if (kind == "http") {
    spec.kind = BackendSpec::Kind::kHttp;
    HttpBackendConfig d;
    spec.http.base_url = get_or<std::string>(j, "base_url", d.base_url, where);
    spec.http.model = get_or<std::string>(j, "model", "", where);
    if (spec.http.model.empty()) throw ConfigError(fmt::format("{} needs a 'model'", where));
    spec.http.api_key_env = get_or<std::string>(j, "api_key_env", d.api_key_env, where);
    spec.http.timeout_s = get_or<double>(j, "timeout_s", d.timeout_s, where);
    spec.http.supports_logprobs = get_or<bool>(j, "supports_logprobs", d.supports_logprobs, where);
    spec.http.extra_headers = get_or<std::map<std::string, std::string>>(j, "headers", {}, where);
  } else {
    throw ConfigError(fmt::format("{}.kind must be 'scripted' or 'http', got '{}'", where, kind));
  }
  return spec;
}

json backend_json(const BackendSpec& spec) {
  if (spec.kind == BackendSpec::Kind::kScripted) {
    std::string digest;
    try {
      digest = sha256_file(spec.script);
    } catch (const std::exception&) {
      digest = "";
    }
    return {{"kind", "scripted"}, {"script", spec.script.string()}, {"script_sha256", digest}};
  }
  return {{"kind", "http"},
          {"base_url", spec.http.base_url},
          {"model", spec.http.model},
          {"api_key_env", spec.http.api_key_env},
          {"timeout_s", spec.http.timeout_s},
          {"supports_logprobs", spec.http.supports_logprobs},
          {"headers", spec.http.extra_headers}};
}

GenerationParams parse_params(const json& j, GenerationParams fallback, std::string_view where) {
  only_keys(j, where, {"temperature", "max_tokens", "logprobs_requested", "top_logprobs", "seed_hint"});
  json merged = fallback;
  merged.update(j);
  try {
    return merged.get<GenerationParams>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{} has a value of the wrong type", where));
  }
}

}  // namespace

void RunConfig::validate() const {
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (n_generations < 1) throw ConfigError("estimator.n_generations must be >= 1");
  if (controls_m < 1) throw ConfigError("controls.M must be >= 1");
  if (control_max_retries < 0) throw ConfigError("controls.max_retries must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (gateway.max_in_flight < 1) throw ConfigError("gateway.max_in_flight must be >= 1");
  if (exemplar_count > 0 && exemplar_pool.empty()) throw ConfigError("exemplars.count > 0 needs exemplars.pool");
  attacker_params.validate();
  target_params.validate();
  judge_params.validate();
}

FuzzConfig RunConfig::fuzz_config() const {
  FuzzConfig fc;
  fc.k_max = k_max;
  fc.attacker_params = attacker_params;
  fc.target_params = target_params;
  fc.preserve_answer_check = preserve_answer_check;
  fc.rng_seed = master_seed;
  return fc;
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  only_keys(j, "config",
            {"attacker", "target", "judge", "attacker_params", "target_params", "judge_params", "k_max", "replicates",
             "preserve_answer_check", "master_seed", "permute_options", "exemplars", "estimator", "controls",
             "retain_orig_incorrect", "workers", "gateway", "templates"});
  RunConfig c;
  if (!j.contains("attacker") || !j.contains("target")) throw ConfigError("config needs 'attacker' and 'target'");
  c.attacker = parse_backend(j.at("attacker"), base_dir, "attacker");
  c.target = parse_backend(j.at("target"), base_dir, "target");
  if (j.contains("judge") && !j.at("judge").is_null()) c.judge = parse_backend(j.at("judge"), base_dir, "judge");
  if (j.contains("attacker_params")) c.attacker_params = parse_params(j.at("attacker_params"), c.attacker_params, "attacker_params");
  if (j.contains("target_params")) c.target_params = parse_params(j.at("target_params"), c.target_params, "target_params");
  if (j.contains("judge_params")) c.judge_params = parse_params(j.at("judge_params"), c.judge_params, "judge_params");
  c.k_max = get_or(j, "k_max", c.k_max, "config");
  c.replicates = get_or(j, "replicates", c.replicates, "config");
  c.preserve_answer_check = get_or(j, "preserve_answer_check", c.preserve_answer_check, "config");
  c.master_seed = get_or(j, "master_seed", c.master_seed, "config");
  c.permute_options = get_or(j, "permute_options", c.permute_options, "config");
  c.retain_orig_incorrect = get_or(j, "retain_orig_incorrect", c.retain_orig_incorrect, "config");
  c.workers = get_or(j, "workers", c.workers, "config");
  if (j.contains("exemplars")) {
    const json& e = j.at("exemplars");
    only_keys(e, "exemplars", {"count", "pool"});
    c.exemplar_count = get_or<std::size_t>(e, "count", 0, "exemplars");
    if (e.contains("pool") && !e.at("pool").get<std::string>().empty()) c.exemplar_pool = resolve(base_dir, e.at("pool").get<std::string>());
  }
  if (j.contains("estimator")) {
    const json& e = j.at("estimator");
    only_keys(e, "estimator", {"n_generations", "floor", "renormalize"});
    c.n_generations = get_or(e, "n_generations", c.n_generations, "estimator");
    c.letter_options.floor = get_or(e, "floor", c.letter_options.floor, "estimator");
    c.letter_options.renormalize = get_or(e, "renormalize", c.letter_options.renormalize, "estimator");
  }
  if (j.contains("controls")) {
    const json& e = j.at("controls");
    only_keys(e, "controls", {"M", "max_retries"});
    c.controls_m = get_or(e, "M", c.controls_m, "controls");
    c.control_max_retries = get_or(e, "max_retries", c.control_max_retries, "controls");
  }
  if (j.contains("gateway")) {
    const json& g = j.at("gateway");
    only_keys(g, "gateway",
              {"max_in_flight", "requests_per_second", "burst", "max_retries", "initial_backoff_ms", "max_backoff_ms",
               "multiplier"});
    c.gateway.max_in_flight = get_or(g, "max_in_flight", c.gateway.max_in_flight, "gateway");
    c.gateway.requests_per_second = get_or(g, "requests_per_second", c.gateway.requests_per_second, "gateway");
    c.gateway.burst = get_or(g, "burst", c.gateway.burst, "gateway");
    c.gateway.retry.max_retries = get_or(g, "max_retries", c.gateway.retry.max_retries, "gateway");
    c.gateway.retry.initial_backoff = std::chrono::milliseconds(
        get_or<long>(g, "initial_backoff_ms", static_cast<long>(c.gateway.retry.initial_backoff.count()), "gateway"));
    c.gateway.retry.max_backoff = std::chrono::milliseconds(
        get_or<long>(g, "max_backoff_ms", static_cast<long>(c.gateway.retry.max_backoff.count()), "gateway"));
    c.gateway.retry.multiplier = get_or(g, "multiplier", c.gateway.retry.multiplier, "gateway");
  }
  if (j.contains("templates") && !j.at("templates").is_null()) c.template_dir = resolve(base_dir, j.at("templates").get<std::string>());
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_run_config(j, std::filesystem::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json j{{"attacker", backend_json(c.attacker)},
         {"target", backend_json(c.target)},
         {"judge", c.judge ? backend_json(*c.judge) : json(nullptr)},
         {"attacker_params", c.attacker_params},
         {"target_params", c.target_params},
         {"judge_params", c.judge_params},
         {"k_max", c.k_max},
         {"replicates", c.replicates},
         {"preserve_answer_check", c.preserve_answer_check},
         {"master_seed", c.master_seed},
         {"permute_options", c.permute_options},
         {"exemplars", {{"count", c.exemplar_count}, {"pool", c.exemplar_pool.string()}}},
         {"estimator",
          {{"n_generations", c.n_generations},
           {"floor", c.letter_options.floor},
           {"renormalize", c.letter_options.renormalize}}},
         {"controls", {{"M", c.controls_m}, {"max_retries", c.control_max_retries}}},
         {"retain_orig_incorrect", c.retain_orig_incorrect},
         {"workers", c.workers},
         {"gateway",
          {{"max_in_flight", c.gateway.max_in_flight},
           {"requests_per_second", c.gateway.requests_per_second},
           {"burst", c.gateway.burst},
           {"max_retries", c.gateway.retry.max_retries},
           {"initial_backoff_ms", c.gateway.retry.initial_backoff.count()},
           {"max_backoff_ms", c.gateway.retry.max_backoff.count()},
           {"multiplier", c.gateway.retry.multiplier}}},
         {"templates", c.template_dir ? json(c.template_dir->string()) : json(nullptr)}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  // Concurrency and throttling settings do not change results, so a run can
  // be resumed with different values.
  json j = to_json(config);
  j.erase("workers");
  j.erase("gateway");
  return sha256_hex(j.dump());
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec) {
  if (spec.kind == BackendSpec::Kind::kScripted) {
    auto backend = ScriptedBackend::from_file(spec.script);
    backend->set_recording(false);
    return backend;
  }
  return std::make_shared<HttpBackend>(spec.http);
}

std::vector<IclExemplar> load_exemplar_pool(const RunConfig& config) {
  std::vector<IclExemplar> pool;
  if (config.exemplar_pool.empty()) return pool;
  for (auto& item : load_corpus(config.exemplar_pool, guess_corpus_format(config.exemplar_pool))) {
    pool.push_back({std::move(item), ""});
  }
  return pool;
}

TemplateStore load_templates(const RunConfig& config) {
  return config.template_dir ? TemplateStore::load(*config.template_dir) : TemplateStore::load_default();
}

}  // namespace medfuzz
