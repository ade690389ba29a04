#pragma once

#include <stdexcept>
#include <string>

namespace rulkit {

/// Malformed input text (wrong field count, unparsable number, ...).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally valid input that violates a dataset contract
/// (count mismatch, broken cycle continuity, ...).
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape disagreement.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A primitive produced a NaN/Inf, or a numeric precondition failed.
class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse (backward called twice, index out of range, ...).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rulkit
