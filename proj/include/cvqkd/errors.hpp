#pragma once

#include <stdexcept>
#include <string>

namespace cvqkd {

/// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure inside a processing stage (CLI exit code 3).
struct PipelineError : std::runtime_error {
    std::string stage;
    PipelineError(std::string stage_, const std::string& what)
        : std::runtime_error("[" + stage_ + "] " + what), stage(std::move(stage_)) {}
};

} // namespace cvqkd
