#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its mathematical domain, or an operation was
/// called with arguments that can only come from a caller bug.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive computation refused because it would not finish in bounded time.
class ResourceBoundError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Binary format errors

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Malformed record payload. Carries the zero-based index of the offending record.
class CorruptionError : public FormatError {
 public:
  CorruptionError(std::size_t record_index, const std::string& what)
      : FormatError("record " + std::to_string(record_index) + ": " + what),
        record_index_(record_index) {}

  std::size_t record_index() const noexcept { return record_index_; }

 private:
  std::size_t record_index_;
};

// ---------------------------------------------------------------------------
// Analysis errors

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class EmptyOpportunitiesError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class UnphysicalScalingError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class InconsistentInputError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class UndefinedRSquaredError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class FitFailure : public AnalysisError {
 public:
  FitFailure(const std::string& what, std::string diagnostics)
      : AnalysisError(what), diagnostics_(std::move(diagnostics)) {}

  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

}  // namespace spdc
