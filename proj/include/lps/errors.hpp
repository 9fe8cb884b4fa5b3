#pragma once

#include <stdexcept>
#include <string>

namespace lps {

// Incompatible tensor shapes. Messages name the op and the offending shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// log of a nonpositive value, division by zero and similar.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller violated a precondition (size mismatch between a group element and
// the data it acts on, non-scalar loss, missing gradient, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input is numerically degenerate (rank collapse in Gram-Schmidt).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An exhaustive oracle was asked for a size it refuses to enumerate.
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lps
