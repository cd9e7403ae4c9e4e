#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medfuzz/config.hpp"
#include "medfuzz/errors.hpp"
#include "medfuzz/run_store.hpp"
#include "medfuzz/serialize.hpp"
#include "world.hpp"

using namespace medfuzz;
namespace fs = std::filesystem;

namespace {

RunManifest manifest() {
  RunManifest m;
  m.run_id = "r";
  m.config = {{"k_max", 5}};
  m.config_hash = "h";
  m.corpus_digest = "d";
  m.item_ids = {"q02", "q/03"};
  m.replicates = 1;
  return m;
}

}  // namespace

TEST(FileId, RoundTrip) {
  for (std::string id : {"q01", "a.b", "x/y", "100%", "space here", "..", "ümlaut"}) {
    const std::string enc = encode_file_id(id);
    EXPECT_EQ(enc.find('/'), std::string::npos) << id;
    EXPECT_EQ(enc.find('.'), std::string::npos) << id;
    EXPECT_EQ(decode_file_id(enc), id);
  }
  EXPECT_EQ(encode_file_id("q01"), "q01");
}

TEST(RunStore, ManifestWrittenFirstAndReopened) {
  const fs::path dir = fixtures::temp_dir("store");
  RunStore store = RunStore::create(dir, manifest());
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir / "trajectories") && !fs::is_empty(dir / "trajectories"));
  RunStore again = RunStore::open(dir);
  EXPECT_EQ(again.manifest().item_ids, manifest().item_ids);
  EXPECT_TRUE(again.manifest().finished_at.empty());
  store.mark_finished();
  EXPECT_FALSE(RunStore::open(dir).manifest().finished_at.empty());
}

TEST(RunStore, ResumeRequiresSameConfigAndCorpus) {
  const fs::path dir = fixtures::temp_dir("resume");
  RunStore::create(dir, manifest());
  EXPECT_NO_THROW(RunStore::create(dir, manifest()));
  RunManifest other = manifest();
  other.config_hash = "other";
  EXPECT_THROW(RunStore::create(dir, other), ConfigError);
  other = manifest();
  other.corpus_digest = "other";
  EXPECT_THROW(RunStore::create(dir, other), ConfigError);
}

TEST(RunStore, OpenWithoutManifestIsIncomplete) {
  EXPECT_THROW(RunStore::open(fixtures::temp_dir("empty")), IncompleteRunError);
}

TEST(RunStore, TrajectoriesPersistByteIdentically) {
  fixtures::ScriptedWorld world;
  const fs::path dir = fixtures::temp_dir("traj");
  RunManifest m = manifest();
  m.item_ids = {"q02", "q04"};
  RunStore store = RunStore::create(dir, m);
  AttackTrajectory a = world.engine.run_attack(world.item("q02"), 0);
  store.save(a);
  EXPECT_EQ(store.load("q02", 0), a);
  EXPECT_FALSE(store.load("q04", 0));
  EXPECT_THROW(store.load_complete_trajectories(), IncompleteRunError);
  const std::string bytes = read_file(store.trajectory_path("q02", 0));
  store.save(*store.load("q02", 0));
  EXPECT_EQ(read_file(store.trajectory_path("q02", 0)), bytes);
  store.save(world.engine.run_attack(world.item("q04"), 0));
  EXPECT_EQ(store.load_complete_trajectories().size(), 2u);
  EXPECT_EQ(store.load_trajectories().front().item_id, "q02");
}

TEST(Serialize, TrajectoryRoundTrip) {
  fixtures::ScriptedWorld world;
  for (const auto& it : world.corpus) {
    AttackTrajectory t = world.engine.run_attack(it, 0);
    json j = t;
    EXPECT_EQ(j.get<AttackTrajectory>(), t) << it.item_id;
    EXPECT_EQ(dump_document(json(j.get<AttackTrajectory>())), dump_document(j));
  }
}

TEST(Serialize, SignificanceRoundTrip) {
  PermutationTestResult r;
  r.p_value_exact = Rational(1) / 3;
  r.report_string = "0.3333";
  r.count_ge = 1;
  r.M = 3;
  r.d_hat_exact = Rational(1) / 2;
  r.d_hat = 0.5;
  r.null_exact = {Rational(1), Rational(0), Rational(-1) / 4};
  r.null_samples = {1.0, 0.0, -0.25};
  const fs::path dir = fixtures::temp_dir("sig");
  RunStore store = RunStore::create(dir, manifest());
  store.save_significance("q02", 0, r);
  auto back = store.load_significance("q02", 0);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->p_value_exact, r.p_value_exact);
  EXPECT_EQ(back->null_exact, r.null_exact);
  EXPECT_EQ(back->d_hat_exact, r.d_hat_exact);
  EXPECT_EQ(back->null_samples, r.null_samples);
  EXPECT_EQ(back->report_string, "0.3333");
  EXPECT_FALSE(store.load_significance("q04", 0));
}

TEST(Config, ParseRejectsUnknownKeysAndValidates) {
  const fs::path base = fixtures::dir();
  json j = fixtures::json_file("scripted_run.json");
  RunConfig c = parse_run_config(j, base);
  EXPECT_EQ(c.k_max, 5);
  EXPECT_EQ(c.replicates, 2);
  EXPECT_TRUE(c.attacker.script.is_absolute());
  json bad = j;
  bad["mystery"] = 1;
  EXPECT_THROW(parse_run_config(bad, base), ConfigError);
  bad = j;
  bad["k_max"] = 0;
  EXPECT_THROW(parse_run_config(bad, base), ConfigError);
}

TEST(Config, HashIgnoresWorkersAndGatewayOnly) {
  const fs::path base = fixtures::dir();
  RunConfig c = parse_run_config(fixtures::json_file("scripted_run.json"), base);
  const std::string h = config_hash(c);
  EXPECT_EQ(h.size(), 64u);
  RunConfig w = c;
  w.workers = 7;
  w.gateway.max_in_flight = 3;
  EXPECT_EQ(config_hash(w), h);
  RunConfig k = c;
  k.k_max = 4;
  EXPECT_NE(config_hash(k), h);
  EXPECT_EQ(config_hash(parse_run_config(to_json(c), base)), h);
}
