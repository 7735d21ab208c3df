#pragma once

#include <stdexcept>
#include <string>

namespace dustk {

// Malformed or unreadable container/sidecar.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value or structure violates a documented contract (schema, plan, weights).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure such as a non-finite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dustk
