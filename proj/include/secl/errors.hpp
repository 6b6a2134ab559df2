#pragma once

#include <stdexcept>
#include <string>

namespace secl {

// Exit codes used by the command-line tool. Each error category maps to one.
enum class ExitCode : int { Ok = 0, Config = 1, Backend = 2, Data = 3 };

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::Data; }
};

class ConfigError : public Error {
public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::Config; }
};

class DataError : public Error {
public:
  using Error::Error;
};

// Raised for anything that goes wrong on the far side of the backend
// boundary. `retryable` marks transient transport failures.
class BackendError : public Error {
public:
  BackendError(const std::string& code, const std::string& message, bool retryable = false)
      : Error(message), code_(code), retryable_(retryable) {}

  const std::string& code() const noexcept { return code_; }
  bool retryable() const noexcept { return retryable_; }
  ExitCode exit_code() const noexcept override { return ExitCode::Backend; }

private:
  std::string code_;
  bool retryable_;
};

class CapabilityError : public BackendError {
public:
  explicit CapabilityError(const std::string& message)
      : BackendError("capability", message, false) {}
};

class ProtocolError : public BackendError {
public:
  explicit ProtocolError(const std::string& message)
      : BackendError("protocol", message, false) {}
};

} // namespace secl
