#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sqlrl {

enum class ErrorKind {
  EmptyInput,
  UnterminatedLiteral,
  InvalidArgument,
  DbNotFound,
  ConnectionError,
  ComparisonOnFailure,
  DegenerateTiming,
  GoldExecutionError,
  EmptyGroup,
  DegenerateGap,
  DegenerateTokens,
  MalformedInput,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::UnterminatedLiteral: return "UnterminatedLiteral";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DbNotFound: return "DbNotFound";
    case ErrorKind::ConnectionError: return "ConnectionError";
    case ErrorKind::ComparisonOnFailure: return "ComparisonOnFailure";
    case ErrorKind::DegenerateTiming: return "DegenerateTiming";
    case ErrorKind::GoldExecutionError: return "GoldExecutionError";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::DegenerateGap: return "DegenerateGap";
    case ErrorKind::DegenerateTokens: return "DegenerateTokens";
    case ErrorKind::MalformedInput: return "MalformedInput";
  }
  return "Unknown";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sqlrl
