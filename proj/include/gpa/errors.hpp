#pragma once

#include <stdexcept>
#include <string>

namespace gpa {

// Thrown when a documented precondition on an argument is violated.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when data passed between modules breaks an internal contract
// (mask mismatch, non-positive depth at a valid pixel, ...).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Thrown when a geometric configuration is too degenerate to solve
// (collinear alignment points, empty valid set at optimizer init, ...).
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by file-format parsers; message carries path and line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gpa
