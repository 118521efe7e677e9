#include "manifest.hpp"

#include <algorithm>

#include "atriaqc/datamodel.hpp"
#include "atriaqc/error.hpp"
#include "atriaqc/hashing.hpp"

namespace atriaqc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kManifestSuffix = ".manifest.json";

bool is_manifest(const fs::path& p) {
  const auto name = p.filename().string();
  return name.size() >= kManifestSuffix.size() &&
         name.compare(name.size() - kManifestSuffix.size(), kManifestSuffix.size(), kManifestSuffix) == 0;
}

std::string combine(const std::map<std::string, std::string>& hashes) {
  std::string text;
  for (const auto& [name, sha] : hashes) text += name + ' ' + sha + '\n';
  return sha256_hex(text);
}

}  // namespace

json RunManifest::to_json() const {
  return {{"format_version", kManifestFormatVersion},
          {"command", command},
          {"argv", argv},
          {"cwd", cwd},
          {"config", config},
          {"seeds", seeds},
          {"inputs", inputs},
          {"outputs", outputs},
          {"metrics", metrics},
          {"wall_clock_seconds", wall_clock_seconds}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    const int version = j.at("format_version").get<int>();
    require(version == kManifestFormatVersion, ErrorKind::Format,
            "manifest format_version " + std::to_string(version) + " != " + std::to_string(kManifestFormatVersion));
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.cwd = j.value("cwd", "");
    m.config = j.value("config", json::object());
    m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.metrics = j.value("metrics", json::object());
    m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

fs::path manifest_path(const fs::path& out_dir, const std::string& command) {
  return out_dir / (command + std::string(kManifestSuffix));
}

std::map<std::string, std::string> hash_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || is_manifest(entry.path())) continue;
    out[fs::relative(entry.path(), dir).generic_string()] = sha256_file(entry.path());
  }
  return out;
}

std::string dataset_hash(const fs::path& data_root) {
  const auto manifest_file = data_root / kDatasetManifestName;
  require(fs::exists(manifest_file), ErrorKind::MissingArtifact,
          "no dataset at " + data_root.string() + " (missing dataset.json)");
  std::map<std::string, std::string> hashes;
  hashes[kDatasetManifestName] = sha256_file(manifest_file);
  const auto manifest = DatasetManifest::read(manifest_file);
  for (const auto& e : manifest.entries) {
    const auto dir = data_root / e.path;
    require(fs::is_directory(dir), ErrorKind::MissingArtifact, "scan directory missing: " + dir.string());
    for (const auto& f : fs::directory_iterator(dir)) {
      if (f.is_regular_file()) hashes[e.path + "/" + f.path().filename().string()] = sha256_file(f.path());
    }
  }
  return combine(hashes);
}

std::string directory_hash(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::MissingArtifact, "missing directory " + dir.string());
  std::map<std::string, std::string> hashes;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.is_regular_file() && !is_manifest(f.path())) hashes[f.path().filename().string()] = sha256_file(f.path());
  }
  return combine(hashes);
}

}  // namespace atriaqc::cli
