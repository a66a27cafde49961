#pragma once

#include <stdexcept>
#include <string>

namespace streid {

/// Malformed or inconsistent input data (bad camera index, empty list, unknown id).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid parameter combination (alpha < 1, non-positive beta, bad simulator graph).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// On-disk content that does not match its declared format.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training data cannot support optimization (e.g. a single class).
class TrainingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during optimization.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace streid
