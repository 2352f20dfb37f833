#pragma once

#include <stdexcept>
#include <string>

namespace vclanc {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (e.g. log of 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed dataset, config or artifact file.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training or fitting produced non-finite values or failed to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vclanc
