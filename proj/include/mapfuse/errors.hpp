#pragma once

#include <stdexcept>
#include <string>

namespace mapfuse {

// Base of all library errors. Two branches: DataError for anything caused
// by malformed or inconsistent input files, NumericalError for failures of
// the math itself. The CLI maps them to exit codes 2 and 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct DegenerateInput : NumericalError {
  using NumericalError::NumericalError;
};

struct EmptyIndex : NumericalError {
  using NumericalError::NumericalError;
};

struct EmptyCloud : NumericalError {
  using NumericalError::NumericalError;
};

struct NoPairsFound : NumericalError {
  using NumericalError::NumericalError;
};

struct NoInliers : NumericalError {
  using NumericalError::NumericalError;
};

struct NoCorrespondences : NumericalError {
  using NumericalError::NumericalError;
};

struct DisconnectedGraph : NumericalError {
  using NumericalError::NumericalError;
};

struct MissingPose : NumericalError {
  using NumericalError::NumericalError;
};

struct SingularSystem : NumericalError {
  using NumericalError::NumericalError;
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct MissingProperty : ParseError {
  using ParseError::ParseError;
};

struct NonMonotonicTimestamps : ParseError {
  using ParseError::ParseError;
};

struct ConfigError : DataError {
  using DataError::DataError;
};

}  // namespace mapfuse
