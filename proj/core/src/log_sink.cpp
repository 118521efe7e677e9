#include "atriaqc/log_sink.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace atriaqc::logging {

namespace {

std::atomic<Level> g_level{Level::Info};

spdlog::logger& logger() {
  static auto instance = [] {
    auto l = spdlog::stderr_color_mt("atriaqc");
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    l->set_level(spdlog::level::trace);
    return l;
  }();
  return *instance;
}

}  // namespace

void write(Level level, std::string_view message) {
  switch (level) {
    case Level::Debug: logger().debug(message); break;
    case Level::Info: logger().info(message); break;
    case Level::Warn: logger().warn(message); break;
    case Level::Error: logger().error(message); break;
    case Level::Off: break;
  }
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

Level level_from_name(std::string_view name) {
  if (name == "debug") return Level::Debug;
  if (name == "info") return Level::Info;
  if (name == "warn") return Level::Warn;
  if (name == "error") return Level::Error;
  if (name == "off") return Level::Off;
  throw std::invalid_argument("unknown log level '" + std::string(name) + "'");
}

}  // namespace atriaqc::logging
