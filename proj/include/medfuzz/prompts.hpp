#pragma once

// Prompt templates live on disk as `templates/<id>.txt` plus a
// `manifest.json` declaring each template's placeholders. Placeholders are
// `{name}`; `{{` and `}}` produce literal braces.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "medfuzz/corpus.hpp"
#include "medfuzz/llm.hpp"

namespace medfuzz {

enum class TemplateId {
  kTargetSystem,
  kTargetCot,
  kTargetConfidence,
  kTargetAnswer,
  kAttackerSystem,
  kAttackerColdStart,
  kAttackerModifyRequest,
  kAttackerPostmortem,
  kAttackerReplan,
  kControlFuzz,
  kJudgeMention,
  kCaseRank,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::kTargetSystem,          TemplateId::kTargetCot,          TemplateId::kTargetConfidence,
    TemplateId::kTargetAnswer,          TemplateId::kAttackerSystem,     TemplateId::kAttackerColdStart,
    TemplateId::kAttackerModifyRequest, TemplateId::kAttackerPostmortem, TemplateId::kAttackerReplan,
    TemplateId::kControlFuzz,           TemplateId::kJudgeMention,       TemplateId::kCaseRank,
};

std::string_view to_string(TemplateId id);
// Throws TemplateLookupError.
TemplateId parse_template_id(std::string_view name);

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
  TemplateId id;
  std::string body;
  std::set<std::string, std::less<>> required_placeholders;
};

// Placeholder names in order of appearance (duplicates kept).
std::vector<std::string> placeholders_in(std::string_view body);

// Throws BindingError for the first unbound placeholder.
std::string render_body(std::string_view body, const Bindings& bindings, std::string_view template_name);

class TemplateStore {
 public:
  // Throws ConfigError when a file is missing or its placeholders disagree
  // with the manifest.
  static TemplateStore load(const std::filesystem::path& dir);
  static TemplateStore load_default();

  const PromptTemplate& get(TemplateId id) const;
  std::string render(TemplateId id, const Bindings& bindings) const;
  // Throws TemplateLookupError on unknown ids.
  std::string render(std::string_view id, const Bindings& bindings) const;

  const std::string& version() const { return version_; }
  // sha256 of each body, keyed by template id.
  std::map<std::string, std::string> version_hashes() const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
  std::string version_;
};

// ---- target dialog ----------------------------------------------------

struct IclExemplar {
  BenchmarkItem item;
  std::string worked_answer;  // defaults to "B: <text>" when empty
};

inline constexpr std::string_view kExemplarPreamble = "Here are example problems with correct answers:";

// System turn plus the chain-of-thought user turn, with an optional
// exemplar block prepended to that user turn. Throws SelfLeakError when an
// exemplar is the probed item.
DialogSession build_target_dialog(const TemplateStore& store, const BenchmarkItem& item,
                                  const std::vector<IclExemplar>& exemplars, GenerationParams params = {},
                                  std::string backend_ref = {});

// "A: 2, B: 5, C: 1, D: 1"
std::string format_confidences(const std::map<Letter, int>& confidences);

}  // namespace medfuzz
