#pragma once

#include <stdexcept>
#include <string>

namespace dpstyler {

/// Caller violated a precondition (shape mismatch, out-of-range index, bad config value).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerically degenerate input, e.g. a zero-norm embedding.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint or manifest could not be read back.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpstyler
