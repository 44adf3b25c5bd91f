#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spinbath {

/// Input violates a documented precondition (bad concentration, zero vector, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Structurally valid input that breaks an invariant (duplicate site, empty table, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. Carries the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string const& source, std::size_t line, std::string const& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Schema-level problems in structured files.
class SchemaError : public std::runtime_error {
public:
    enum class Kind { MissingField, BadUnitTag, NonMonotoneGrid, BadValue, VersionMismatch };

    SchemaError(Kind kind, std::string const& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Inconsistent run or sampler configuration, detected before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace spinbath
