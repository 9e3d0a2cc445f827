#pragma once

#include <stdexcept>
#include <string>

namespace lutfuse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor, image or LUT dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed input file (cube, PPM, PNG, manifest, checkpoint).
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Invalid parameter or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace lutfuse
