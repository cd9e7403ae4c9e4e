#pragma once

// Run directory layout:
//   manifest.json
//   trajectories/<item>.<rep>.json
//   significance/<item>.<rep>.json
//   reports/
// Item ids are percent-encoded in file names.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medfuzz/ensemble.hpp"
#include "medfuzz/fuzz_engine.hpp"
#include "medfuzz/significance.hpp"

namespace medfuzz {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunManifest {
  std::string run_id;
  nlohmann::json config;  // canonical config snapshot
  std::string config_hash;
  std::map<std::string, std::string> template_hashes;
  std::string template_version;
  std::map<std::string, std::string> backends;  // role -> backend id
  std::string corpus_path;
  std::string corpus_digest;
  std::vector<std::string> item_ids;  // corpus order
  std::uint64_t master_seed = 0;
  int replicates = 0;
  std::string started_at;
  std::string finished_at;  // empty until the fuzz command completes
  std::string tool_version = std::string(kToolVersion);
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// Writes to a sibling temp file, then renames.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Reversible and free of '.', '/' and other separators.
std::string encode_file_id(std::string_view item_id);
std::string decode_file_id(std::string_view encoded);

std::string utc_timestamp();

class RunStore : public TrajectoryStore {
 public:
  // Creates the directory and writes the manifest before anything else.
  // If a manifest already exists it must carry the same config hash and
  // corpus digest (resume); otherwise throws ConfigError.
  static RunStore create(const std::filesystem::path& dir, const RunManifest& manifest);
  // Throws IncompleteRunError when there is no manifest.
  static RunStore open(const std::filesystem::path& dir);

  RunStore(RunStore&& other) noexcept;

  const std::filesystem::path& dir() const { return dir_; }
  const RunManifest& manifest() const { return manifest_; }
  void mark_finished();

  std::filesystem::path trajectory_path(const std::string& item_id, int replicate) const;
  std::filesystem::path significance_path(const std::string& item_id, int replicate) const;
  std::filesystem::path reports_dir() const { return dir_ / "reports"; }

  std::optional<AttackTrajectory> load(const std::string& item_id, int replicate) override;
  void save(const AttackTrajectory& trajectory) override;

  // Every trajectory on disk, in manifest item order then replicate.
  std::vector<AttackTrajectory> load_trajectories() const;
  // Throws IncompleteRunError unless every (item, replicate) in the
  // manifest has a complete trajectory.
  std::vector<AttackTrajectory> load_complete_trajectories() const;

  void save_significance(const std::string& item_id, int replicate, const PermutationTestResult& result);
  std::optional<PermutationTestResult> load_significance(const std::string& item_id, int replicate) const;

  // Writes reports/<name>.
  void write_report(const std::filesystem::path& name, std::string_view content);

 private:
  RunStore(std::filesystem::path dir, RunManifest manifest);
  std::optional<AttackTrajectory> read_trajectory(const std::string& item_id, int replicate) const;

  std::filesystem::path dir_;
  RunManifest manifest_;
  mutable std::mutex mu_;
};

}  // namespace medfuzz
