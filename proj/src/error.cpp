#include "makeup/error.hpp"

namespace makeup {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kEmptyRegion: return "empty_region";
    case ErrorKind::kUnknownRegion: return "unknown_region";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kRegistration: return "registration";
    case ErrorKind::kBackend: return "backend";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kTimeout: return "timeout";
    case ErrorKind::kCancelled: return "cancelled";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
      kind_(kind),
      detail_(message) {}

Error Error::annotated(const std::string& label) const {
  return Error(kind_, label + ": " + detail_);
}

}  // namespace makeup
