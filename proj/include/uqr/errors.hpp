#pragma once

#include <stdexcept>
#include <string>

namespace uqr {

// Bad arguments or malformed numeric input (NaN/Inf, dimension mismatch).
class InvalidInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation requires state that has not been established (e.g. prediction
// with uncertainty before the covariance pass).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be parsed; message names the offending line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file parsed but contradicts its manifest (dims, counts, magic).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote judge replied with something outside the wire protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote judge kept failing after all retries.
class JudgeUnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cholesky failure on a matrix that is positive definite by construction.
class SingularityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace uqr
