#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bridgeflow {

enum class ErrorKind {
  NonControllable,
  NonFinite,
  OutOfRange,
  SqrtFailure,
  BlowUp,
  Singular,
  EmptySupport,
  MassMismatch,
  NotConverged,
  SingularGuard,
  InvalidArgument,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above; the
/// message is prefixed with the kind name so CLI output stays greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the Fortet/Sinkhorn solver when the tolerance is not met.
class NotConvergedError : public Error {
 public:
  NotConvergedError(int iterations, double residual, double epsilon);

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }
  double epsilon() const noexcept { return epsilon_; }

 private:
  int iterations_;
  double residual_;
  double epsilon_;
};

}  // namespace bridgeflow
