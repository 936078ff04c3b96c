#pragma once

#include <stdexcept>
#include <string>

namespace condfield {

/// Malformed input or violated precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dense operator would exceed the configured dimension cap.
class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not meet its stated accuracy or validity contract.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace condfield
