#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medfuzz/errors.hpp"
#include "medfuzz/prompts.hpp"

using namespace medfuzz;

namespace {

BenchmarkItem item(std::string id, std::string stem) {
  BenchmarkItem it;
  it.item_id = std::move(id);
  it.stem = std::move(stem);
  it.options = {{'A', "yes"}, {'B', "no"}};
  it.correct_letter = 'A';
  return it;
}

}  // namespace

TEST(Prompts, PlaceholdersAndEscapes) {
  EXPECT_EQ(placeholders_in("{a} and {{literal}} and {b} and {a}"), (std::vector<std::string>{"a", "b", "a"}));
  EXPECT_EQ(render_body("x={a}, {{y}}", {{"a", "1"}}, "t"), "x=1, {y}");
}

TEST(Prompts, BindingValuesAreNotReexpanded) {
  EXPECT_EQ(render_body("{a}", {{"a", "{b}"}}, "t"), "{b}");
}

TEST(Prompts, MissingBindingNamesPlaceholder) {
  try {
    render_body("{present} {absent}", {{"present", "x"}}, "tmpl");
    FAIL() << "expected BindingError";
  } catch (const BindingError& e) {
    EXPECT_EQ(e.placeholder(), "absent");
  }
}

TEST(Prompts, StoreLoadsEveryTemplate) {
  TemplateStore store = TemplateStore::load(fixtures::template_dir());
  for (TemplateId id : kAllTemplates) EXPECT_FALSE(store.get(id).body.empty()) << to_string(id);
  EXPECT_EQ(store.version_hashes().size(), std::size(kAllTemplates));
  EXPECT_THROW(store.render("no_such_template", {}), TemplateLookupError);
  EXPECT_EQ(parse_template_id("attacker_postmortem"), TemplateId::kAttackerPostmortem);
}

TEST(Prompts, GoldenRenders) {
  TemplateStore store = TemplateStore::load(fixtures::template_dir());
  EXPECT_EQ(store.render(TemplateId::kTargetAnswer, {{"letter_list", "A, B, C, or D"}}) + "\n",
            fixtures::slurp(fixtures::golden_dir() / "target_answer.txt"));
  EXPECT_EQ(store.render(TemplateId::kAttackerReplan, {{"correct_answer", "[correct answer]"}}) + "\n",
            fixtures::slurp(fixtures::golden_dir() / "attacker_replan.txt"));
}

TEST(Prompts, ManifestMismatchIsConfigError) {
  auto dir = fixtures::temp_dir("prompts-manifest");
  for (const auto& e : std::filesystem::directory_iterator(fixtures::template_dir())) {
    std::filesystem::copy_file(e.path(), dir / e.path().filename());
  }
  {
    std::ofstream out(dir / "target_cot.txt");
    out << "No placeholder here.\n";
  }
  EXPECT_THROW(TemplateStore::load(dir), ConfigError);
  std::filesystem::remove(dir / "target_cot.txt");
  EXPECT_THROW(TemplateStore::load(dir), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Prompts, TargetDialogShape) {
  TemplateStore store = TemplateStore::load(fixtures::template_dir());
  DialogSession s = build_target_dialog(store, item("x", "Is it?"), {});
  ASSERT_EQ(s.messages().size(), 2u);
  EXPECT_EQ(s.messages()[0].role, Role::kSystem);
  EXPECT_NE(s.messages()[1].content.find("Is it?\n\nA: yes\nB: no"), std::string::npos);
}

TEST(Prompts, ExemplarsArePrependedAndSelfLeakRejected) {
  TemplateStore store = TemplateStore::load(fixtures::template_dir());
  IclExemplar ex{item("ex", "Other question?"), ""};
  DialogSession s = build_target_dialog(store, item("x", "Is it?"), {ex});
  const std::string& user = s.messages()[1].content;
  EXPECT_EQ(user.rfind(std::string(kExemplarPreamble), 0), 0u);
  EXPECT_NE(user.find("Answer: A: yes"), std::string::npos);
  EXPECT_LT(user.find("Other question?"), user.find("Is it?"));
  EXPECT_THROW(build_target_dialog(store, item("x", "Is it?"), {IclExemplar{item("x", "Is it?"), ""}}),
               SelfLeakError);
}

TEST(Prompts, FormatConfidences) {
  EXPECT_EQ(format_confidences({{'A', 2}, {'B', 5}, {'C', 1}, {'D', 1}}), "A: 2, B: 5, C: 1, D: 1");
}
