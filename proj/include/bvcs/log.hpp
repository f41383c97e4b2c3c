#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

#include "bvcs/strings.hpp"

namespace bvcs {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

namespace detail {

inline LogLevel parse_log_level(const char* text, LogLevel fallback) {
    if (!text) return fallback;
    std::string s = to_lower(text);
    if (s == "error") return LogLevel::Error;
    if (s == "warn" || s == "warning") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return fallback;
}

inline const char* log_level_name(LogLevel level) {
    switch (level) {
        case LogLevel::Error: return "error";
        case LogLevel::Warn: return "warn";
        case LogLevel::Info: return "info";
        case LogLevel::Debug: return "debug";
    }
    return "?";
}

}  // namespace detail

/// Threshold comes from BVCS_LOG (error|warn|info|debug), default warn.
inline LogLevel log_threshold() {
    static LogLevel level = detail::parse_log_level(std::getenv("BVCS_LOG"), LogLevel::Warn);
    return level;
}

/// Writes to stderr so command output on stdout stays clean.
inline void log(LogLevel level, const std::string& msg) {
    if (level > log_threshold()) return;
    std::fprintf(stderr, "[%s] %s\n", detail::log_level_name(level), msg.c_str());
}

inline void log_error(const std::string& msg) { log(LogLevel::Error, msg); }
inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

}  // namespace bvcs
