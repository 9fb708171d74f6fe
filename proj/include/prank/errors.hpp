#ifndef PRANK_ERRORS_HPP
#define PRANK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace prank {

// Base for every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed an out-of-contract value (K > n, empty mix, bad weights...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Trajectory or vector has the wrong number of elements.
class LengthError : public Error {
public:
    using Error::Error;
};

// Tensor shapes disagree (encoder inputs, checkpoint layout).
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed file content. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Misuse of an API, e.g. calling backward on a non-scalar.
class UsageError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or value during numeric work.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace prank

#endif  // PRANK_ERRORS_HPP
