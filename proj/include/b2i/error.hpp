#pragma once

#include <stdexcept>
#include <string>

namespace b2i {

enum class ErrorKind {
  length,
  parameter,
  shape,
  label,
  state,
  numeric,
  config,
  ingestion,
  checkpoint,
  spec,
  split,
  evaluation,
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::length: return "length error";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::label: return "label error";
    case ErrorKind::state: return "state error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::config: return "config error";
    case ErrorKind::ingestion: return "ingestion error";
    case ErrorKind::checkpoint: return "checkpoint error";
    case ErrorKind::spec: return "spec error";
    case ErrorKind::split: return "split error";
    case ErrorKind::evaluation: return "evaluation error";
  }
  return "error";
}

/// Base of every exception thrown by the library. The kind drives the CLI
/// exit code mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class TypedError : public Error {
 public:
  explicit TypedError(const std::string& what) : Error(K, what) {}
};

using LengthError = TypedError<ErrorKind::length>;
using ParameterError = TypedError<ErrorKind::parameter>;
using ShapeError = TypedError<ErrorKind::shape>;
using LabelError = TypedError<ErrorKind::label>;
using StateError = TypedError<ErrorKind::state>;
using NumericError = TypedError<ErrorKind::numeric>;
using ConfigError = TypedError<ErrorKind::config>;
using IngestionError = TypedError<ErrorKind::ingestion>;
using CheckpointError = TypedError<ErrorKind::checkpoint>;
using SpecError = TypedError<ErrorKind::spec>;
using SplitError = TypedError<ErrorKind::split>;
using EvaluationError = TypedError<ErrorKind::evaluation>;

}  // namespace b2i
