#pragma once

#include <stdexcept>
#include <string>

namespace hazsurf {

// Base of all library errors.  The CLI maps subtrees of this hierarchy to
// process exit codes: specification/schema problems -> 2, numerical
// failures -> 3, I/O failures -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Invalid model / grid / basis specification (bad segment counts, penalty
// order too high, inverted domains, duplicate cause names, ...).
class InvalidSpecError : public Error {
 public:
  using Error::Error;
};

// Evaluation point outside the domain a basis was built on.
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};

// Input data violating the declared schema: unknown column or covariate
// name, unparsable field, record outside the binning grid, mismatched
// evaluation grids between causes.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Cause surfaces evaluated on different grids cannot be combined.
class AlignmentError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

// Numerical failure of the penalized IWLS loop.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string &msg, double last_dev)
      : Error(msg), last_deviance(last_dev) {}
  double last_deviance;
};

// Data that cannot support a fit at all (no events, no exposure).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

// Smoothing-parameter search could not produce a single valid fit.
class SearchError : public Error {
 public:
  using Error::Error;
};

// Too many bootstrap replicates failed.
class BootstrapError : public Error {
 public:
  using Error::Error;
};

// File system / stream failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hazsurf
