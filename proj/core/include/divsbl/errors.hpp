#pragma once

#include <stdexcept>
#include <string>

namespace divsbl {

/// Malformed inputs: non-finite entries, inconsistent dimensions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Block index outside the layout, or a dimension not divisible by the block size.
class LayoutError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A function was evaluated outside its mathematical domain (zero variance, zero signal, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bad experiment configuration or infeasible signal settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read or written. The message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divsbl
