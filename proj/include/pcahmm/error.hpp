#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcahmm {

enum class ErrorCode {
  // configuration / io
  ConfigError,
  IoError,
  // data
  MalformedCsv,
  NonPositivePrice,
  DuplicateDate,
  UnsortedDates,
  TooFewRows,
  MissingData,
  InsufficientAssets,
  InsufficientHistory,
  DegenerateColumn,
  DimensionMismatch,
  TooFewObservations,
  EmptyInput,
  EmptyReport,
  NoPositions,
  // numerical
  InvalidMatrix,
  ConvergenceFailure,
  NonPositiveVariance,
  AllFitsFailed,
  ZeroVolatility,
  TooShort,
};

enum class ErrorCategory { Config, Data, Numerical };

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::DuplicateDate: return "DuplicateDate";
    case ErrorCode::UnsortedDates: return "UnsortedDates";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::InsufficientAssets: return "InsufficientAssets";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::NoPositions: return "NoPositions";
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::AllFitsFailed: return "AllFitsFailed";
    case ErrorCode::ZeroVolatility: return "ZeroVolatility";
    case ErrorCode::TooShort: return "TooShort";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::IoError:
      return ErrorCategory::Config;
    case ErrorCode::InvalidMatrix:
    case ErrorCode::ConvergenceFailure:
    case ErrorCode::NonPositiveVariance:
    case ErrorCode::AllFitsFailed:
    case ErrorCode::ZeroVolatility:
    case ErrorCode::TooShort:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

constexpr const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Numerical: return "numerical";
  }
  return "numerical";
}

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace pcahmm
