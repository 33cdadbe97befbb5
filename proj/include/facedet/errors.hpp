#pragma once

#include <stdexcept>
#include <string>

namespace facedet {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (see cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class BoundsError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };

}  // namespace facedet
