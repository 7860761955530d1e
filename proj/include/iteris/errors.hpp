#pragma once

// Error taxonomy shared by the whole library. Everything derives from
// std::runtime_error; the CLI maps each type to a distinct exit code.

#include <stdexcept>
#include <string>

namespace iteris {

// Dimension or layout mismatch between matrices / graph edges.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Structural problem in a computation graph (cycle, bad reference, ...).
struct GraphError : std::runtime_error {
    explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

// A factorization pivot fell below the singularity floor. `context` names
// the call site (site index, iteration) when the caller provided one.
struct SingularError : std::runtime_error {
    explicit SingularError(const std::string& what, std::string context = {})
        : std::runtime_error(context.empty() ? what : what + " [" + context + "]"),
          context(std::move(context)) {}
    std::string context;
};

// Invalid argument values (bad rank, empty task list, coefficient sums, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite data is required.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A task contributes nothing measurable (zero output features) to a formula
// that divides by its magnitude.
struct DegenerateTaskError : std::runtime_error {
    explicit DegenerateTaskError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration (unknown method name, inconsistent manifest, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File-level problems: missing paths, malformed bundles, short reads.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace iteris
