#pragma once

#include <utility>

#include <fmt/format.h>

#include "atriaqc/log_sink.hpp"

// Formatting happens here with the fmt copy visible to torch consumers; the
// sink behind log_sink.hpp forwards finished lines to spdlog.
namespace atriaqc::logging {

template <typename... Args>
void log(Level l, fmt::format_string<Args...> f, Args&&... args) {
  if (enabled(l)) write(l, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  log(Level::Debug, f, std::forward<Args>(args)...);
}
template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  log(Level::Info, f, std::forward<Args>(args)...);
}
template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  log(Level::Warn, f, std::forward<Args>(args)...);
}
template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  log(Level::Error, f, std::forward<Args>(args)...);
}

}  // namespace atriaqc::logging
