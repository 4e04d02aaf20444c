#pragma once

#include <string_view>

namespace wiski {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kOff = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_message(LogLevel level, std::string_view message);

inline void log_warning(std::string_view message) { log_message(LogLevel::kWarning, message); }
inline void log_info(std::string_view message) { log_message(LogLevel::kInfo, message); }

}  // namespace wiski
