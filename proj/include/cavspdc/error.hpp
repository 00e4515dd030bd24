#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cavspdc {

enum class ErrorKind {
  OutOfRange,
  DomainError,
  NoSolution,
  GridMismatch,
  MalformedNetlist,
  FitDiverged,
  Ambiguous,
  WindowOutOfGrid,
  ZeroGrid,
  AsymmetricWindows,
  ParseError,
  ValidationError,
  IOError,
  NumericFailure,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::NoSolution: return "NoSolution";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::MalformedNetlist: return "MalformedNetlist";
    case ErrorKind::FitDiverged: return "FitDiverged";
    case ErrorKind::Ambiguous: return "Ambiguous";
    case ErrorKind::WindowOutOfGrid: return "WindowOutOfGrid";
    case ErrorKind::ZeroGrid: return "ZeroGrid";
    case ErrorKind::AsymmetricWindows: return "AsymmetricWindows";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IOError: return "IOError";
    case ErrorKind::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cavspdc
