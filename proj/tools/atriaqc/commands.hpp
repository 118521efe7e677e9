#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "atriaqc/qa_models.hpp"

namespace atriaqc::cli {

/// Runs one CLI invocation. `args` excludes the program name. Returns the
/// process exit code: 0 ok, 2 config/data, 3 missing or malformed artifact,
/// 4 numeric failure, 1 anything else.
int run(const std::vector<std::string>& args);

/// `selections.json` written by select-slices; `path` may name the file or
/// its directory.
SliceSelections read_selections(const std::filesystem::path& path);

inline constexpr const char* kDataDirEnv = "ATRIAQC_DATA_DIR";

}  // namespace atriaqc::cli
