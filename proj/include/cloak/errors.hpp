#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cloak {

enum class ErrorKind {
  InvalidArgument,
  ParseError,
  NonInvertibleMetric,
  SingularConductivity,
  CoordinateSingularity,
  OutsideDomain,
  OutsideCodomain,
  DegenerateJacobian,
  InvalidEpsilon,
  NoBoundedBranch,
  ToleranceNotMet,
  DegreeMismatch,
  NonPDTensor,
  SingularSystem,
  NonConvergence,
  ConfigInvalid,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (tests, the
/// CLI exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cloak
