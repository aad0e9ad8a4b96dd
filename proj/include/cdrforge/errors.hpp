#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdrforge {

/// Broad failure classes; the numeric values are the CLI exit codes.
enum class ErrorKind {
    input = 2,
    insufficient_data = 3,
    numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, std::string reason);
    std::size_t line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

class UnknownSubscriber : public Error {
public:
    explicit UnknownSubscriber(const std::string& id)
        : Error(ErrorKind::input, "MMTR references unknown subscriber '" + id + "'") {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::input, what) {}
};

class EmptySpace : public Error {
public:
    EmptySpace() : Error(ErrorKind::input, "taxonomy configuration enables no legal feature") {}
};

class InvalidProfile : public Error {
public:
    explicit InvalidProfile(const std::string& what) : Error(ErrorKind::input, "invalid profile: " + what) {}
};

class FeatureMismatch : public Error {
public:
    explicit FeatureMismatch(const std::string& what) : Error(ErrorKind::input, "feature mismatch: " + what) {}
};

class InsufficientClass : public Error {
public:
    InsufficientClass(const std::string& label, std::size_t available, std::size_t required);
    std::size_t available() const noexcept { return available_; }

private:
    std::size_t available_;
};

class DegenerateLabels : public Error {
public:
    DegenerateLabels() : Error(ErrorKind::insufficient_data, "labels contain a single class") {}
};

class NonConvergence : public Error {
public:
    explicit NonConvergence(int iterations);
    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

class ZeroGain : public Error {
public:
    ZeroGain() : Error(ErrorKind::numerical, "model made no splits; importance is undefined") {}
};

} // namespace cdrforge
