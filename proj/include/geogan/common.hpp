#pragma once

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>

namespace geogan {

// Error taxonomy. The CLI maps these onto stable exit codes:
// validation/format/state -> 2, io -> 3, numeric -> 4.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};
struct StateError : std::runtime_error {
  explicit StateError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

enum class LogLevel : int { Quiet = 0, Warn = 1, Info = 2, Debug = 3, Timing = 4 };

// Level comes from GEOGAN_LOG (quiet|warn|info|debug|timing), default info.
// "timing" additionally enables wall-clock columns in training logs, which
// are otherwise written as 0 so that logs stay byte-reproducible.
LogLevel log_level();

namespace detail {
void log_line(LogLevel lvl, const std::string& msg);
}

template <typename... Args>
void log_at(LogLevel lvl, Args&&... args) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::ostringstream os;
  (os << ... << args);
  detail::log_line(lvl, os.str());
}

template <typename... Args>
void log_warn(Args&&... args) {
  log_at(LogLevel::Warn, std::forward<Args>(args)...);
}
template <typename... Args>
void log_info(Args&&... args) {
  log_at(LogLevel::Info, std::forward<Args>(args)...);
}
template <typename... Args>
void log_debug(Args&&... args) {
  log_at(LogLevel::Debug, std::forward<Args>(args)...);
}

bool timing_enabled();

}  // namespace geogan
