#include "cdrforge/errors.hpp"

namespace cdrforge {

MalformedRow::MalformedRow(std::size_t line, std::string reason)
    : Error(ErrorKind::input, "malformed row at line " + std::to_string(line) + ": " + reason),
      line_(line), reason_(std::move(reason)) {}

InsufficientClass::InsufficientClass(const std::string& label, std::size_t available, std::size_t required)
    : Error(ErrorKind::insufficient_data,
            "class " + label + " has " + std::to_string(available) + " members, " + std::to_string(required) +
                " required"),
      available_(available) {}

NonConvergence::NonConvergence(int iterations)
    : Error(ErrorKind::numerical, "IRLS did not converge after " + std::to_string(iterations) + " iterations"),
      iterations_(iterations) {}

} // namespace cdrforge
