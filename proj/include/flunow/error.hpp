#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flunow {

enum class ErrorKind {
  InvalidArgument,
  IoError,
  ParseError,
  MissingWeek,
  EmptyIntersection,
  DegenerateInput,
  ShapeMismatch,
  EmptyCorpus,
  AlignmentError,
  InsufficientHistory,
  EmptyTrain,
  NoData,
  NonConvergence,
  SeriesTooShort,
  DegenerateActuals,
  AllActualsZero,
  DegenerateSeries,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingWeek: return "MissingWeek";
    case ErrorKind::EmptyIntersection: return "EmptyIntersection";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::EmptyTrain: return "EmptyTrain";
    case ErrorKind::NoData: return "NoData";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::DegenerateActuals: return "DegenerateActuals";
    case ErrorKind::AllActualsZero: return "AllActualsZero";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind so
/// callers (the CLI in particular) can map it to a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace flunow
