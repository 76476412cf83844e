#pragma once

#include <stdexcept>
#include <string>

namespace kmpc {

/// Base for all recoverable library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf input or blow-up.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid parameters, shapes or preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace kmpc
