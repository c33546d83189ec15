#pragma once

#include <stdexcept>
#include <string>

namespace phiml {

/// Caller passed arguments that violate an operation's contract.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Input data is empty, malformed or otherwise unusable.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phiml
