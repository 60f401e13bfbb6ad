#pragma once

#include <stdexcept>
#include <string>

namespace rrd {

// Invalid configuration values (bad gen_len/block_size, degenerate thresholds, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition or invariant violation: double finalization, out-of-block writes,
// frames not covering the queried positions. Never silent.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized data: unknown reason tags, bad JSONL records, truncated checkpoints.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite model output, diverging loss weights, division-by-zero temperature.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures: unreadable scenario files, missing checkpoints.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric undefined on the given input (too-short token list) or trace lacking
// the data a computation needs (summary-level trace fed to a frame replay).
struct MetricError : std::runtime_error {
    explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rrd
