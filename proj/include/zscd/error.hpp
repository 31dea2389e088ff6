#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zscd {

enum class ErrorCode {
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  BadShape,
  TruncatedPayload,
  TrailingBytes,
  NonFiniteValue,
  RunLengthOverflow,
  InvalidSegment,
  IoFailure,
  ParseError,
  DimMismatch,
  ZeroNormDescriptor,
  IndexOutOfRange,
  EmptyInput,
  DegenerateConfiguration,
  RankDeficient,
  InsufficientCorrespondences,
  NoConsensus,
  PointAtInfinity,
  EmptySegment,
  InvalidParameter,
  MissingFile,
  LayoutMismatch,
  MissingPrediction,
  NoPairs,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::RunLengthOverflow: return "RunLengthOverflow";
    case ErrorCode::InvalidSegment: return "InvalidSegment";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ZeroNormDescriptor: return "ZeroNormDescriptor";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::EmptySegment: return "EmptySegment";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::NoPairs: return "NoPairs";
  }
  return "Unknown";
}

/// Every failure in the library is reported as a zscd::Error carrying a
/// stable code; the CLI serializes the code into its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace zscd
