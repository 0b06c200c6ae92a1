#pragma once

#include <stdexcept>
#include <string>

namespace senseflow {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (usage 1, data/format 2, numerical 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Mismatched dimensions or channel counts between maps.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the operation's domain (nonpositive disparity, point
// behind the camera, empty valid set, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported file content.
class FormatError : public Error {
public:
    using Error::Error;
};

// Singular or ill-conditioned numerical problem.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace senseflow
