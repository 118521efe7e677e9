#pragma once

#include <string_view>

namespace atriaqc::logging {

enum class Level { Debug, Info, Warn, Error, Off };

void write(Level level, std::string_view message);
void set_level(Level level);
Level level();
Level level_from_name(std::string_view name);

inline bool enabled(Level l) { return l >= level() && l != Level::Off; }

}  // namespace atriaqc::logging
