#pragma once

#include <stdexcept>
#include <string>

namespace wavecast {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or malformed input data (CLI exit code 2).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Numerical failure such as a factorization that cannot be stabilized
/// (CLI exit code 3).
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class EmptySeriesError : public DataError {
public:
    explicit EmptySeriesError(const std::string& msg = "empty series") : DataError(msg) {}
};

class AllMissingError : public DataError {
public:
    explicit AllMissingError(const std::string& msg = "series has no present values") : DataError(msg) {}
};

class TooShortError : public DataError {
public:
    explicit TooShortError(const std::string& msg = "series too short") : DataError(msg) {}
};

class OutOfOrderError : public DataError {
public:
    explicit OutOfOrderError(const std::string& msg = "timestamps out of order") : DataError(msg) {}
};

class EmptyContextError : public DataError {
public:
    explicit EmptyContextError(const std::string& msg = "empty context") : DataError(msg) {}
};

class NonFiniteError : public DataError {
public:
    explicit NonFiniteError(const std::string& msg = "non-finite value") : DataError(msg) {}
};

class BadTokenError : public DataError {
public:
    explicit BadTokenError(const std::string& msg = "bad token id") : DataError(msg) {}
};

class ShapeError : public DataError {
public:
    explicit ShapeError(const std::string& msg = "shape mismatch") : DataError(msg) {}
};

class DomainError : public DataError {
public:
    explicit DomainError(const std::string& msg = "value outside metric domain") : DataError(msg) {}
};

class ContextOverflowError : public DataError {
public:
    explicit ContextOverflowError(const std::string& msg = "input longer than model capacity") : DataError(msg) {}
};

class MalformedTargetError : public DataError {
public:
    explicit MalformedTargetError(const std::string& msg = "target region malformed") : DataError(msg) {}
};

class FormatError : public DataError {
public:
    explicit FormatError(const std::string& msg = "unrecognized file format") : DataError(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class RunFailedError : public Error {
public:
    explicit RunFailedError(const std::string& msg = "no cell of the run succeeded") : Error(msg) {}
};

} // namespace wavecast
