#include "cloak/errors.hpp"

namespace cloak {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonInvertibleMetric: return "NonInvertibleMetric";
    case ErrorKind::SingularConductivity: return "SingularConductivity";
    case ErrorKind::CoordinateSingularity: return "CoordinateSingularity";
    case ErrorKind::OutsideDomain: return "OutsideDomain";
    case ErrorKind::OutsideCodomain: return "OutsideCodomain";
    case ErrorKind::DegenerateJacobian: return "DegenerateJacobian";
    case ErrorKind::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorKind::NoBoundedBranch: return "NoBoundedBranch";
    case ErrorKind::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorKind::DegreeMismatch: return "DegreeMismatch";
    case ErrorKind::NonPDTensor: return "NonPDTensor";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cloak
