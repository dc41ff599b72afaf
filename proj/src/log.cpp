#include "isoha/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace isoha::log {

std::shared_ptr<spdlog::logger> get() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("isoha");
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    const char* env = std::getenv("HA_LOG");
    const std::string level = env ? env : "info";
    if (level == "quiet") {
      l->set_level(spdlog::level::warn);
    } else if (level == "debug") {
      l->set_level(spdlog::level::debug);
    } else {
      l->set_level(spdlog::level::info);
    }
    return l;
  }();
  return logger;
}

}  // namespace isoha::log
