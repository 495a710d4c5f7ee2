#pragma once

#include <stdexcept>
#include <string>

namespace cpnmor {

/// Invalid input data or arguments (bad files, dimension mismatches, bad flags).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested accuracy or stability target cannot be met with the given data.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (non-finite values, solver blow-up).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cpnmor
