#pragma once

#include <stdexcept>
#include <string>

namespace popcomp {

/// Bad arguments or malformed data supplied by the caller.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical operation could not be carried out reliably.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double condition = 0.0)
      : std::runtime_error(what), condition_(condition) {}

  /// Condition number of the offending matrix, 0 when not applicable.
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace popcomp
