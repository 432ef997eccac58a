#pragma once

#include <stdexcept>
#include <string>

namespace specadapt {

// Base class for all library errors. Each named condition gets its own type
// so callers can catch precisely; the CLI maps them onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// An input error: the caller supplied something unusable.
class InputError : public Error {
 public:
  using Error::Error;
};

struct EmptySentence : InputError {
  using InputError::InputError;
};

struct InvalidRating : InputError {
  using InputError::InputError;
};

struct EmptyCorpus : InputError {
  using InputError::InputError;
};

struct EmptyBatch : InputError {
  using InputError::InputError;
};

struct InsufficientBatch : InputError {
  using InputError::InputError;
};

struct ParseError : InputError {
  using InputError::InputError;
};

struct DimensionMismatch : InputError {
  using InputError::InputError;
};

struct UndefinedCorrelation : InputError {
  using InputError::InputError;
};

// Model/checkpoint state unusable for the requested operation.
struct ModelStateError : Error {
  using Error::Error;
};

// A training loss went non-finite; the run aborts with diagnostics.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace specadapt
