// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vedocr {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A violated precondition, postcondition or type invariant.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Shape or dimension mismatch between operands.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Index, id or axis out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (carries location info in the message).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem / stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// CTC target that no frame alignment can produce.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

} // namespace vedocr
