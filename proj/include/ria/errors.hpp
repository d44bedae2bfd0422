#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ria {

enum class ErrorKind {
    Dimension,
    Domain,
    Contract,
    Lookup,
    Parse,
    Invariant,
    Config,
    Training,
    CacheMiss,
    UndefinedMetric,
    Io,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this one exception type; the
// kind tag lets callers (and the CLI error record) dispatch without parsing
// messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace ria
