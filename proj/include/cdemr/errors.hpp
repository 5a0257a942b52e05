#pragma once

#include <stdexcept>
#include <string>

namespace cdemr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Problems with the inputs: bad schema, bad labels, empty target strata,
// inconsistent configuration. The CLI maps these to exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Numerical failures inside fitting. The CLI maps these to exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SchemaError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EmptyStratum : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidLabel : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnknownVariable : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class VariantMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class FoldTooSmall : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MissingEif : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LengthMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ZeroCell : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class RankDeficient : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class Separation : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NotConverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Too many bootstrap resamples had to be skipped.
class TooManySkipped : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace cdemr
