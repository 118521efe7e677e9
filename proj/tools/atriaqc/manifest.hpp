#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace atriaqc::cli {

inline constexpr int kManifestFormatVersion = 1;

/// Record of one command invocation: enough to re-run it and to check that
/// the re-run produced the same bytes.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // subcommand and its arguments
  std::string cwd;
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // name -> sha256
  std::map<std::string, std::string> outputs;  // path relative to out dir -> sha256
  nlohmann::json metrics = nlohmann::json::object();
  double wall_clock_seconds = 0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::filesystem::path manifest_path(const std::filesystem::path& out_dir, const std::string& command);

/// sha256 of every file under `dir` except run manifests, keyed by relative path.
std::map<std::string, std::string> hash_outputs(const std::filesystem::path& dir);

/// Content hash of a dataset root: dataset.json and every file of every listed scan.
std::string dataset_hash(const std::filesystem::path& data_root);

/// Combined hash of the regular files directly inside `dir`, excluding manifests.
std::string directory_hash(const std::filesystem::path& dir);

}  // namespace atriaqc::cli
