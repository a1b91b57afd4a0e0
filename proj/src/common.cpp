#include "geogan/common.hpp"

#include <algorithm>
#include <cctype>

namespace geogan {

static LogLevel parse_level(const char* s) {
  if (!s) return LogLevel::Info;
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "quiet" || v == "0") return LogLevel::Quiet;
  if (v == "warn" || v == "1") return LogLevel::Warn;
  if (v == "info" || v == "2") return LogLevel::Info;
  if (v == "debug" || v == "3") return LogLevel::Debug;
  if (v == "timing" || v == "4") return LogLevel::Timing;
  return LogLevel::Info;
}

LogLevel log_level() {
  static LogLevel lvl = parse_level(std::getenv("GEOGAN_LOG"));
  return lvl;
}

bool timing_enabled() { return log_level() == LogLevel::Timing; }

namespace detail {

void log_line(LogLevel lvl, const std::string& msg) {
  static std::mutex mu;
  const char* tag = "";
  switch (lvl) {
    case LogLevel::Warn: tag = "[warn] "; break;
    case LogLevel::Debug: tag = "[debug] "; break;
    case LogLevel::Timing: tag = "[time] "; break;
    default: break;
  }
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << tag << msg << "\n";
}

}  // namespace detail
}  // namespace geogan
