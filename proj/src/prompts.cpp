#include "medfuzz/prompts.hpp"

#include <cctype>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "medfuzz/digest.hpp"
#include "medfuzz/errors.hpp"

namespace medfuzz {
namespace {

constexpr std::pair<TemplateId, std::string_view> kNames[] = {
    {TemplateId::kTargetSystem, "target_system"},
    {TemplateId::kTargetCot, "target_cot"},
    {TemplateId::kTargetConfidence, "target_confidence"},
    {TemplateId::kTargetAnswer, "target_answer"},
    {TemplateId::kAttackerSystem, "attacker_system"},
    {TemplateId::kAttackerColdStart, "attacker_cold_start"},
    {TemplateId::kAttackerModifyRequest, "attacker_modify_request"},
    {TemplateId::kAttackerPostmortem, "attacker_postmortem"},
    {TemplateId::kAttackerReplan, "attacker_replan"},
    {TemplateId::kControlFuzz, "control_fuzz"},
    {TemplateId::kJudgeMention, "judge_mention"},
    {TemplateId::kCaseRank, "case_rank"},
};

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Walks `body`, calling on_text for literal runs and on_name for placeholders.
template <typename OnText, typename OnName>
void scan(std::string_view body, OnText on_text, OnName on_name) {
  std::size_t i = 0;
  while (i < body.size()) {
    char c = body[i];
    if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
      on_text(std::string_view("{"));
      i += 2;
    } else if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
      on_text(std::string_view("}"));
      i += 2;
    } else if (c == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_name_char(body[j])) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        on_name(body.substr(i + 1, j - i - 1));
        i = j + 1;
      } else {
        on_text(body.substr(i, 1));
        ++i;
      }
    } else {
      std::size_t j = i;
      while (j < body.size() && body[j] != '{' && body[j] != '}') ++j;
      if (j == i) j = i + 1;
      on_text(body.substr(i, j - i));
      i = j;
    }
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read template " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [tid, name] : kNames) {
    if (tid == id) return name;
  }
  return "unknown";
}

TemplateId parse_template_id(std::string_view name) {
  for (const auto& [tid, n] : kNames) {
    if (n == name) return tid;
  }
  throw TemplateLookupError(fmt::format("unknown template id '{}'", name));
}

std::vector<std::string> placeholders_in(std::string_view body) {
  std::vector<std::string> out;
  scan(body, [](std::string_view) {}, [&](std::string_view name) { out.emplace_back(name); });
  return out;
}

std::string render_body(std::string_view body, const Bindings& bindings, std::string_view template_name) {
  std::string out;
  out.reserve(body.size());
  scan(
      body, [&](std::string_view text) { out += text; },
      [&](std::string_view name) {
        auto it = bindings.find(name);
        if (it == bindings.end()) throw BindingError(std::string(name), std::string(template_name));
        out += it->second;
      });
  return out;
}

TemplateStore TemplateStore::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("template manifest: {}", e.what()));
  }
  if (!manifest.contains("templates") || !manifest["templates"].is_object()) {
    throw ConfigError("template manifest needs a 'templates' object");
  }

  TemplateStore store;
  store.version_ = manifest.value("version", "0");
  for (const auto& [name, placeholders] : manifest["templates"].items()) {
    TemplateId id;
    try {
      id = parse_template_id(name);
    } catch (const TemplateLookupError&) {
      throw ConfigError(fmt::format("template manifest lists unknown template '{}'", name));
    }
    PromptTemplate t{id, read_file(dir / (name + ".txt")), {}};
    if (!t.body.empty() && t.body.back() == '\n') t.body.pop_back();
    for (const auto& p : placeholders) t.required_placeholders.insert(p.get<std::string>());

    std::set<std::string, std::less<>> found;
    for (auto& p : placeholders_in(t.body)) found.insert(std::move(p));
    if (found != t.required_placeholders) {
      throw ConfigError(fmt::format("template '{}' placeholders do not match the manifest", name));
    }
    store.templates_.emplace(id, std::move(t));
  }
  for (TemplateId id : kAllTemplates) {
    if (!store.templates_.contains(id)) {
      throw ConfigError(fmt::format("template '{}' missing from {}", to_string(id), dir.string()));
    }
  }
  return store;
}

TemplateStore TemplateStore::load_default() { return load(MEDFUZZ_DEFAULT_TEMPLATE_DIR); }

const PromptTemplate& TemplateStore::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw TemplateLookupError(fmt::format("template '{}' not loaded", to_string(id)));
  return it->second;
}

std::string TemplateStore::render(TemplateId id, const Bindings& bindings) const {
  const PromptTemplate& t = get(id);
  for (const auto& name : t.required_placeholders) {
    if (!bindings.contains(name)) throw BindingError(name, std::string(to_string(id)));
  }
  return render_body(t.body, bindings, to_string(id));
}

std::string TemplateStore::render(std::string_view id, const Bindings& bindings) const {
  return render(parse_template_id(id), bindings);
}

std::map<std::string, std::string> TemplateStore::version_hashes() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, t] : templates_) out[std::string(to_string(id))] = sha256_hex(t.body);
  return out;
}

// ---- target dialog ----------------------------------------------------

DialogSession build_target_dialog(const TemplateStore& store, const BenchmarkItem& item,
                                  const std::vector<IclExemplar>& exemplars, GenerationParams params,
                                  std::string backend_ref) {
  std::string user;
  if (!exemplars.empty()) {
    user += kExemplarPreamble;
    int n = 0;
    for (const auto& ex : exemplars) {
      if (ex.item.item_id == item.item_id || ex.item.stem == item.stem) {
        throw SelfLeakError(fmt::format("exemplar '{}' is the probed item", ex.item.item_id));
      }
      user += fmt::format("\n\nExample {}:\n{}\nAnswer: {}", ++n, render_item(ex.item),
                          ex.worked_answer.empty() ? render_answer(ex.item) : ex.worked_answer);
    }
    user += "\n\n";
  }
  user += store.render(TemplateId::kTargetCot, {{"benchmark_item", render_item(item)}});

  DialogSession session(std::move(backend_ref), std::move(params));
  session.system(store.render(TemplateId::kTargetSystem, {}));
  session.user(std::move(user));
  return session;
}

std::string format_confidences(const std::map<Letter, int>& confidences) {
  std::string out;
  for (const auto& [letter, score] : confidences) {
    if (!out.empty()) out += ", ";
    out += fmt::format("{}: {}", letter, score);
  }
  return out;
}

}  // namespace medfuzz
