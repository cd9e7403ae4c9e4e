#include "medfuzz/run_store.hpp"

#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "medfuzz/errors.hpp"
#include "medfuzz/serialize.hpp"

namespace medfuzz {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunManifest& m) {
  return {{"run_id", m.run_id},
          {"config", m.config},
          {"config_hash", m.config_hash},
          {"template_hashes", m.template_hashes},
          {"template_version", m.template_version},
          {"backends", m.backends},
          {"corpus_path", m.corpus_path},
          {"corpus_digest", m.corpus_digest},
          {"item_ids", m.item_ids},
          {"master_seed", m.master_seed},
          {"replicates", m.replicates},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"tool_version", m.tool_version}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.template_hashes = j.at("template_hashes").get<std::map<std::string, std::string>>();
    m.template_version = j.value("template_version", "");
    m.backends = j.at("backends").get<std::map<std::string, std::string>>();
    m.corpus_path = j.value("corpus_path", "");
    m.corpus_digest = j.at("corpus_digest").get<std::string>();
    m.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.replicates = j.at("replicates").get<int>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.tool_version = j.value("tool_version", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IncompleteRunError(fmt::format("malformed manifest: {}", e.what()));
  }
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  thread_local std::mt19937_64 salt{std::random_device{}()};
  fs::path tmp = path;
  tmp += fmt::format(".tmp{:016x}", salt());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string encode_file_id(std::string_view item_id) {
  std::string out;
  for (char c : item_id) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '_' || c == '-') {
      out.push_back(c);
    } else {
      out += fmt::format("%{:02X}", uc);
    }
  }
  return out;
}

std::string decode_file_id(std::string_view encoded) {
  std::string out;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i] == '%' && i + 2 < encoded.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(encoded.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(encoded[i]);
    }
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunStore::RunStore(fs::path dir, RunManifest manifest) : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

RunStore::RunStore(RunStore&& other) noexcept : dir_(std::move(other.dir_)), manifest_(std::move(other.manifest_)) {}

RunStore RunStore::create(const fs::path& dir, const RunManifest& manifest) {
  const fs::path path = dir / "manifest.json";
  if (fs::exists(path)) {
    RunStore existing = open(dir);
    const RunManifest& m = existing.manifest();
    if (m.config_hash != manifest.config_hash || m.corpus_digest != manifest.corpus_digest ||
        m.replicates != manifest.replicates) {
      throw ConfigError(fmt::format("{} holds a run with a different config, corpus or replicate count", dir.string()));
    }
    return existing;
  }
  fs::create_directories(dir);
  write_file_atomic(path, dump_document(to_json(manifest)));
  fs::create_directories(dir / "trajectories");
  fs::create_directories(dir / "significance");
  fs::create_directories(dir / "reports");
  return RunStore(dir, manifest);
}

RunStore RunStore::open(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw IncompleteRunError(fmt::format("{} has no manifest.json", dir.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IncompleteRunError(fmt::format("malformed manifest: {}", e.what()));
  }
  return RunStore(dir, manifest_from_json(j));
}

void RunStore::mark_finished() {
  std::lock_guard lock(mu_);
  manifest_.finished_at = utc_timestamp();
  write_file_atomic(dir_ / "manifest.json", dump_document(to_json(manifest_)));
}

fs::path RunStore::trajectory_path(const std::string& item_id, int replicate) const {
  return dir_ / "trajectories" / fmt::format("{}.{}.json", encode_file_id(item_id), replicate);
}

fs::path RunStore::significance_path(const std::string& item_id, int replicate) const {
  return dir_ / "significance" / fmt::format("{}.{}.json", encode_file_id(item_id), replicate);
}

std::optional<AttackTrajectory> RunStore::load(const std::string& item_id, int replicate) {
  return read_trajectory(item_id, replicate);
}

std::optional<AttackTrajectory> RunStore::read_trajectory(const std::string& item_id, int replicate) const {
  const fs::path path = trajectory_path(item_id, replicate);
  if (!fs::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path)).get<AttackTrajectory>();
  } catch (const nlohmann::json::exception& e) {
    throw IncompleteRunError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void RunStore::save(const AttackTrajectory& trajectory) {
  write_file_atomic(trajectory_path(trajectory.item_id, trajectory.replicate_index),
                    dump_document(nlohmann::json(trajectory)));
}

std::vector<AttackTrajectory> RunStore::load_trajectories() const {
  std::vector<AttackTrajectory> out;
  for (const auto& id : manifest_.item_ids) {
    for (int rep = 0; rep < manifest_.replicates; ++rep) {
      if (auto t = read_trajectory(id, rep)) out.push_back(std::move(*t));
    }
  }
  return out;
}

std::vector<AttackTrajectory> RunStore::load_complete_trajectories() const {
  auto all = load_trajectories();
  const std::size_t expected = manifest_.item_ids.size() * static_cast<std::size_t>(manifest_.replicates);
  std::size_t complete = 0;
  for (const auto& t : all) complete += t.complete() ? 1 : 0;
  if (complete != expected) {
    throw IncompleteRunError(fmt::format("{} of {} replicates are complete in {}", complete, expected, dir_.string()));
  }
  return all;
}

void RunStore::save_significance(const std::string& item_id, int replicate, const PermutationTestResult& result) {
  nlohmann::json j = result;
  j["item_id"] = item_id;
  j["replicate_index"] = replicate;
  write_file_atomic(significance_path(item_id, replicate), dump_document(j));
}

std::optional<PermutationTestResult> RunStore::load_significance(const std::string& item_id, int replicate) const {
  const fs::path path = significance_path(item_id, replicate);
  if (!fs::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path)).get<PermutationTestResult>();
  } catch (const nlohmann::json::exception& e) {
    throw IncompleteRunError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void RunStore::write_report(const fs::path& name, std::string_view content) {
  write_file_atomic(reports_dir() / name, content);
}

}  // namespace medfuzz
