#pragma once

#include <stdexcept>
#include <string>

namespace hgp {

/// Bad input data: malformed files, violated invariants, wrong dimensions.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-convergence, loss of definiteness).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hgp
