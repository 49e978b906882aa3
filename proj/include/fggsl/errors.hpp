#pragma once

#include <stdexcept>
#include <string>

namespace fggsl {

// Base of every library error. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// NaN/Inf or a solver that failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed input file; messages carry the file name and line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// Input parsed fine but is semantically invalid (bad split, bad config value).
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace fggsl
