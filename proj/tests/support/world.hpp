#pragma once

// The ten-item scripted corpus wired to scripted attacker and target models.

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "medfuzz/corpus.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/llm.hpp"
#include "medfuzz/prompts.hpp"
#include "medfuzz/scripted_backend.hpp"

namespace fixtures {

inline void no_sleep(std::chrono::milliseconds) {}

inline medfuzz::FuzzConfig scripted_fuzz_config(int k_max = 5, std::uint64_t seed = 20240601) {
  medfuzz::FuzzConfig c;
  c.k_max = k_max;
  c.rng_seed = seed;
  return c;
}

struct ScriptedWorld {
  explicit ScriptedWorld(medfuzz::FuzzConfig config = scripted_fuzz_config())
      : engine(attacker, target, templates, std::move(config)) {}

  const medfuzz::BenchmarkItem& item(const std::string& id) const {
    for (const auto& it : corpus) {
      if (it.item_id == id) return it;
    }
    throw std::out_of_range(id);
  }

  medfuzz::TemplateStore templates = medfuzz::TemplateStore::load(template_dir());
  std::vector<medfuzz::BenchmarkItem> corpus =
      medfuzz::load_corpus(dir() / "scripted_corpus.jsonl", medfuzz::CorpusFormat::kJsonl);
  std::shared_ptr<medfuzz::ScriptedBackend> attacker_backend =
      medfuzz::ScriptedBackend::from_file(dir() / "scripted_attacker.json");
  std::shared_ptr<medfuzz::ScriptedBackend> target_backend =
      medfuzz::ScriptedBackend::from_file(dir() / "scripted_target.json");
  medfuzz::Gateway attacker{attacker_backend, {}, no_sleep};
  medfuzz::Gateway target{target_backend, {}, no_sleep};
  medfuzz::FuzzEngine engine;
};

}  // namespace fixtures
