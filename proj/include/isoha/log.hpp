#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace isoha::log {

// Shared stderr logger. HA_LOG=quiet|info|debug picks the level (default info).
std::shared_ptr<spdlog::logger> get();

}  // namespace isoha::log
