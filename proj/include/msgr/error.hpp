#pragma once

#include <stdexcept>
#include <string>

namespace msgr {

// Broad failure classes; the CLI maps each to its own exit code.
enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)), message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Short machine-readable tag such as "MissingColumn" or "InvalidRho".
  const std::string& code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::string message_;
};

inline Error config_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Config, std::move(code), msg);
}
inline Error data_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Data, std::move(code), msg);
}
inline Error numerical_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Numerical, std::move(code), msg);
}

}  // namespace msgr
