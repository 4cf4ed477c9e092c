#pragma once

#include <stdexcept>
#include <string>

namespace commlat {

// Bad input from the user: malformed files, unknown ids, invalid windows.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A request that is well-formed but cannot be satisfied (e.g. not enough
// node capacity for a remap).
class InfeasibleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Unknown session, region or rank reference.
class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Broken internal invariant; never the caller's fault.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace commlat
