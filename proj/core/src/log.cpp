#include "rrdiffuse/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace rrd::log {

namespace {

Level parse_env() {
    const char* value = std::getenv("RR_DIFFUSE_LOG");
    if (value == nullptr) return Level::Warn;
    const std::string v(value);
    if (v == "error") return Level::Error;
    if (v == "warn") return Level::Warn;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
}

Level& threshold_ref() {
    static Level level = parse_env();
    return level;
}

const char* tag(Level level) {
    switch (level) {
        case Level::Error: return "error";
        case Level::Warn: return "warn";
        case Level::Info: return "info";
        case Level::Debug: return "debug";
    }
    return "?";
}

std::mutex& io_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

Level threshold() { return threshold_ref(); }
void set_threshold(Level level) { threshold_ref() = level; }
bool enabled(Level level) { return static_cast<int>(level) <= static_cast<int>(threshold_ref()); }

void write(Level level, const std::string& msg) {
    if (!enabled(level)) return;
    std::lock_guard<std::mutex> lock(io_mutex());
    std::cerr << "[rrdiffuse:" << tag(level) << "] " << msg << "\n";
}

}  // namespace rrd::log
