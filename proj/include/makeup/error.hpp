#pragma once

#include <stdexcept>
#include <string>

namespace makeup {

enum class ErrorKind {
  kParameter,
  kShape,
  kNumeric,
  kEmptyRegion,
  kUnknownRegion,
  kConfiguration,
  kRegistration,
  kBackend,
  kTransport,
  kTimeout,
  kCancelled,
  kIo,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library. `context` accumulates
// "stage: ..." / "region: ..." annotations as the error propagates.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

  // Timeouts and transport failures may succeed on a second attempt.
  bool retryable() const {
    return kind_ == ErrorKind::kTimeout || kind_ == ErrorKind::kTransport;
  }

  // Returns a copy whose message is prefixed with `label`.
  Error annotated(const std::string& label) const;

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace makeup
