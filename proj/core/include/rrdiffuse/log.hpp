#pragma once

#include <string>

namespace rrd::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold comes from the RR_DIFFUSE_LOG env var (error|warn|info|debug),
// default warn. Messages go to stderr only; data artifacts never contain them.
Level threshold();
void set_threshold(Level level);

bool enabled(Level level);
void write(Level level, const std::string& msg);

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void warn(const std::string& msg) { write(Level::Warn, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

}  // namespace rrd::log
