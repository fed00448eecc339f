#include "bridgeflow/errors.hpp"

#include <cstdio>

namespace bridgeflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonControllable: return "NonControllable";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::SqrtFailure: return "SqrtFailure";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::Singular: return "Singular";
    case ErrorKind::EmptySupport: return "EmptySupport";
    case ErrorKind::MassMismatch: return "MassMismatch";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SingularGuard: return "SingularGuard";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

namespace {
std::string not_converged_message(int iterations, double residual, double epsilon) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epsilon=%.6g: residual %.3e after %d iterations", epsilon,
                residual, iterations);
  return buf;
}
}  // namespace

NotConvergedError::NotConvergedError(int iterations, double residual, double epsilon)
    : Error(ErrorKind::NotConverged, not_converged_message(iterations, residual, epsilon)),
      iterations_(iterations),
      residual_(residual),
      epsilon_(epsilon) {}

}  // namespace bridgeflow
