#pragma once

#include <stdexcept>
#include <string>

namespace ebcobart {

// Invalid input, dimension mismatch, bad config. CLI maps this to exit 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: undefined diagnostic, optimizer non-convergence,
// degenerate likelihood. CLI maps this to exit 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ebcobart
