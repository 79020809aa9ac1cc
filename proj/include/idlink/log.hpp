#pragma once

#include <fmt/core.h>

#include <atomic>
#include <cstdio>
#include <string_view>

namespace idlink {

enum class LogLevel { debug = 0, info = 1, warn = 2, silent = 3 };

inline std::atomic<LogLevel>& log_level() {
  static std::atomic<LogLevel> level{LogLevel::warn};
  return level;
}

template <typename... Args>
void log_at(LogLevel lvl, fmt::format_string<Args...> f, Args&&... args) {
  if (lvl < log_level().load(std::memory_order_relaxed)) return;
  static constexpr std::string_view tags[] = {"debug", "info", "warn", ""};
  fmt::print(stderr, "[idlink:{}] {}\n", tags[static_cast<int>(lvl)],
             fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void log_warn(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::warn, f, std::forward<Args>(args)...);
}

template <typename... Args>
void log_info(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::info, f, std::forward<Args>(args)...);
}

template <typename... Args>
void log_debug(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::debug, f, std::forward<Args>(args)...);
}

}  // namespace idlink
