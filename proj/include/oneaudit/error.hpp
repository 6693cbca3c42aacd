#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oneaudit {

enum class ErrorCode {
  NonPositiveMargin,
  EmptyBatch,
  BetOutOfRange,
  EmptyNull,
  InfeasibleSpec,
  InvalidConfig,
  ParseError,
  IoError,
  OutOfOrderEntry,
  SessionNotFound,
  InvalidVote,
  InvalidState,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveMargin: return "NonPositiveMargin";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::BetOutOfRange: return "BetOutOfRange";
    case ErrorCode::EmptyNull: return "EmptyNull";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::OutOfOrderEntry: return "OutOfOrderEntry";
    case ErrorCode::SessionNotFound: return "SessionNotFound";
    case ErrorCode::InvalidVote: return "InvalidVote";
    case ErrorCode::InvalidState: return "InvalidState";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace oneaudit
