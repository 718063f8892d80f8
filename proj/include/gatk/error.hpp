#pragma once

#include <stdexcept>
#include <string>

namespace gatk {

// Error taxonomy. The three top-level categories map one-to-one onto the
// CLI exit codes (configuration 2, data/format 3, numerical 4).

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class IndexError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class VersionError : public DataError {
public:
    using DataError::DataError;
};

class LengthError : public DataError {
public:
    using DataError::DataError;
};

class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

class ConsistencyError : public DataError {
public:
    using DataError::DataError;
};

class DriftError : public DataError {
public:
    using DataError::DataError;
};

class NoEligibleSamplesError : public DataError {
public:
    using DataError::DataError;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace gatk
