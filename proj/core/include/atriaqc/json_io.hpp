#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

namespace atriaqc {

/// Pretty-printed (2-space) JSON plus trailing newline; creates parent dirs.
void write_json_file(const std::filesystem::path& file, const nlohmann::json& j);
/// Throws MissingArtifact if absent and Format if unparsable.
nlohmann::json read_json_file(const std::filesystem::path& file);

}  // namespace atriaqc
