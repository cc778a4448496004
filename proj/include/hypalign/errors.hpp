#pragma once

#include <stdexcept>

namespace hypalign {

/// Raised when a computation produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hypalign
