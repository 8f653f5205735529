#pragma once

#include <stdexcept>
#include <string>

namespace fedbkd {

// Caller passed structurally bad values: shape mismatch, out-of-range label,
// empty input where data is required.
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid configuration value (non-positive learning rate, unknown config key, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Requested partition cannot be constructed from the available data.
struct PartitionError : std::runtime_error {
    explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

// Optimization produced a non-finite loss; carries the epoch it happened in.
struct TrainingDivergenceError : std::runtime_error {
    TrainingDivergenceError(const std::string& what, std::size_t epoch_index)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch_index) + ")"),
          epoch(epoch_index) {}
    std::size_t epoch;
};

// Evaluation protocol misuse, e.g. holdout client overlapping federation data.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace fedbkd
