#pragma once

#include <stdexcept>
#include <string>

namespace irseg {

/// Broad failure category; the CLI maps each one to its exit code.
enum class ErrorKind {
  kUsage,      // bad arguments or configuration
  kData,       // unreadable or inconsistent input data
  kNumerical,  // solver failure, singular system, non-convergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable tag, e.g. "pgm.truncated".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error usage_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::kUsage, std::move(code), msg);
}
inline Error data_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::kData, std::move(code), msg);
}
inline Error numerical_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::kNumerical, std::move(code), msg);
}

}  // namespace irseg
